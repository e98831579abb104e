#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dub {

/// Sampled waveform. Samples are interleaved by channel and lie in [-1, 1].
struct AudioBuffer {
  int sample_rate = 16000;
  int channels = 1;
  std::vector<double> samples;

  std::size_t frame_count() const {
    return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0;
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frame_count()) / sample_rate : 0.0;
  }
  bool is_mono() const { return channels == 1; }

  /// Throws InvalidArgument when a type invariant is violated.
  void validate() const;
};

/// Frame rate as an exact fraction, e.g. 25/1 or 30000/1001.
struct Rational {
  std::int64_t num = 25;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

Rational parse_rational(std::string_view text);
std::string format_rational(Rational r);

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const Image&) const = default;
};

struct FrameSequence {
  int width = 0;
  int height = 0;
  Rational frame_rate;
  std::vector<Image> frames;

  double duration_s() const { return static_cast<double>(frames.size()) / frame_rate.value(); }
  void validate() const;
};

struct FaceBox {
  std::size_t frame_index = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const FaceBox&) const = default;
};

/// Face boxes per frame; frame indices strictly increasing.
struct FaceTrack {
  std::vector<FaceBox> entries;

  /// Box for a frame, or nullptr if the frame has none.
  const FaceBox* find(std::size_t frame_index) const;

  /// Checks ordering and box sizes; with `bounds`, also that every box lies
  /// inside the frame raster and refers to an existing frame.
  void validate(const FrameSequence* bounds = nullptr) const;
};

/// Paths to every pipeline input, resolved against the manifest directory.
struct InputManifest {
  std::filesystem::path root;
  std::filesystem::path audio_path;
  std::filesystem::path frames_dir;
  std::optional<std::filesystem::path> face_track_path;
  std::optional<std::filesystem::path> transcript_path;
  std::optional<std::filesystem::path> mt_lexicon_path;
  std::optional<std::filesystem::path> tts_lexicon_path;
};

// WAV: RIFF/WAVE, PCM 16-bit, mono or stereo.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf);
AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const AudioBuffer& buf, const std::filesystem::path& path);

/// Float sample to PCM16: clamp to [-1, 1 - 2^-15], scale by 32768, round
/// half away from zero.
std::int16_t quantize_pcm16(double sample);

// Binary PPM (P6, maxval 255).
Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);

/// Reads `%06d.ppm` files plus the one-line `rate` file.
FrameSequence read_frame_seq(const std::filesystem::path& dir);
void write_frame_seq(const FrameSequence& seq, const std::filesystem::path& dir);

/// One JSON object per line: {"frame":i,"x":..,"y":..,"w":..,"h":..}.
FaceTrack parse_face_track(std::string_view text, const FrameSequence* bounds = nullptr);
std::string format_face_track(const FaceTrack& track);
FaceTrack read_face_track(const std::filesystem::path& path,
                          const FrameSequence* bounds = nullptr);

/// Reads `<dir>/manifest.json` and checks that every referenced file exists.
InputManifest read_manifest(const std::filesystem::path& dir);

// Small file helpers shared by the text formats.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dub
