#include "dub/media_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dub/error.hpp"

namespace dub {

namespace fs = std::filesystem;

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("audio: sample_rate must be positive");
  if (channels <= 0) throw InvalidArgument("audio: channels must be positive");
  if (samples.size() % static_cast<std::size_t>(channels) != 0)
    throw InvalidArgument("audio: sample count is not a multiple of channels");
  for (double s : samples)
    if (!std::isfinite(s)) throw InvalidArgument("audio: non-finite sample");
}

Rational parse_rational(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  auto parse_int = [&](std::string_view s) {
    s = trim(s);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw FormatError("rate: not an integer: '" + std::string(s) + "'");
    return v;
  };
  Rational r;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    r.num = parse_int(text.substr(0, slash));
    r.den = parse_int(text.substr(slash + 1));
  } else {
    r.num = parse_int(text);
    r.den = 1;
  }
  if (r.num <= 0 || r.den <= 0) throw FormatError("rate: must be positive");
  return r;
}

std::string format_rational(Rational r) {
  if (r.den == 1) return std::to_string(r.num);
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

void FrameSequence::validate() const {
  if (frame_rate.num <= 0 || frame_rate.den <= 0)
    throw InvalidArgument("frames: frame rate must be positive");
  for (const auto& f : frames) {
    if (f.width != width || f.height != height)
      throw InvalidArgument("frames: dimension mismatch between frames");
    if (f.rgb.size() != static_cast<std::size_t>(width) * height * 3)
      throw InvalidArgument("frames: raster size does not match dimensions");
  }
  if (!frames.empty() && (width <= 0 || height <= 0))
    throw InvalidArgument("frames: non-positive dimensions");
}

const FaceBox* FaceTrack::find(std::size_t frame_index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), frame_index,
                             [](const FaceBox& b, std::size_t f) { return b.frame_index < f; });
  if (it == entries.end() || it->frame_index != frame_index) return nullptr;
  return &*it;
}

void FaceTrack::validate(const FrameSequence* bounds) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& b = entries[i];
    if (i > 0 && b.frame_index <= entries[i - 1].frame_index)
      throw InvalidArgument("face track: frame indices must be strictly increasing (frame " +
                            std::to_string(b.frame_index) + ")");
    if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0)
      throw InvalidArgument("face track: invalid box at frame " + std::to_string(b.frame_index));
    if (bounds != nullptr) {
      if (b.frame_index >= bounds->frames.size())
        throw InvalidArgument("face track: frame " + std::to_string(b.frame_index) +
                              " does not exist");
      if (b.x + b.w > bounds->width || b.y + b.h > bounds->height)
        throw InvalidArgument("face track: box out of bounds at frame " +
                              std::to_string(b.frame_index));
    }
  }
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("wav: missing RIFF/WAVE header");

  std::optional<AudioBuffer> fmt;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw FormatError("wav: truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t tag = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (tag == kFormatExtensible && size >= 40) tag = le16(f + 24);
      if (tag != kFormatPcm) throw FormatError("wav: unsupported codec (only PCM)");
      if (bits != 16) throw FormatError("wav: unsupported bit depth " + std::to_string(bits));
      if (channels != 1 && channels != 2)
        throw FormatError("wav: unsupported channel count " + std::to_string(channels));
      if (rate == 0) throw FormatError("wav: zero sample rate");
      fmt = AudioBuffer{static_cast<int>(rate), static_cast<int>(channels), {}};
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!fmt) throw FormatError("wav: data chunk before fmt chunk");
      if (body + size > bytes.size()) throw FormatError("wav: truncated data chunk");
      const std::size_t block = 2u * static_cast<std::size_t>(fmt->channels);
      if (size % block != 0) throw FormatError("wav: data size is not a whole number of frames");
      fmt->samples.resize(size / 2);
      const std::uint8_t* d = bytes.data() + body;
      for (std::size_t i = 0; i < fmt->samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(d + 2 * i));
        fmt->samples[i] = static_cast<double>(v) / 32768.0;
      }
      return std::move(*fmt);
    }
    pos = body + size + (size & 1u);
  }
  if (!fmt) throw FormatError("wav: missing fmt chunk");
  throw FormatError("wav: missing data chunk");
}

std::int16_t quantize_pcm16(double sample) {
  constexpr double kMax = 1.0 - 1.0 / 32768.0;
  const double clamped = std::clamp(sample, -1.0, kMax);
  return static_cast<std::int16_t>(std::round(clamped * 32768.0));
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf) {
  buf.validate();
  if (buf.channels > 2) throw InvalidArgument("wav: at most 2 channels");
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, static_cast<std::uint16_t>(buf.channels));
  put32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put32(out, static_cast<std::uint32_t>(buf.sample_rate * buf.channels * 2));
  put16(out, static_cast<std::uint16_t>(buf.channels * 2));
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (double s : buf.samples) put16(out, static_cast<std::uint16_t>(quantize_pcm16(s)));
  return out;
}

AudioBuffer read_wav(const fs::path& path) {
  auto bytes = read_binary_file(path);
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioBuffer& buf, const fs::path& path) {
  write_binary_file(path, encode_wav(buf));
}

// ---------------------------------------------------------------------------
// PPM

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&] {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("ppm: malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError("ppm: dimension too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw FormatError("ppm: not a binary P6 file");
  pos = 2;
  const int w = read_uint();
  const int h = read_uint();
  const int maxval = read_uint();
  if (w <= 0 || h <= 0) throw FormatError("ppm: non-positive dimensions");
  if (maxval != 255) throw FormatError("ppm: maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: malformed header");
  ++pos;
  Image img(w, h);
  if (bytes.size() - pos < img.rgb.size()) throw FormatError("ppm: truncated raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.rgb.size(), img.rgb.begin());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

namespace {

std::string frame_file_name(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu.ppm", index);
  return name;
}

}  // namespace

FrameSequence read_frame_seq(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("frames: not a directory: " + dir.string());
  FrameSequence seq;
  seq.frame_rate = parse_rational(read_text_file(dir / "rate"));

  std::map<std::size_t, fs::path> numbered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() != 10 || name.substr(6) != ".ppm") continue;
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(name.data(), name.data() + 6, idx);
    if (ec != std::errc() || ptr != name.data() + 6) continue;
    numbered.emplace(idx, entry.path());
  }
  std::size_t expected = 0;
  for (const auto& [idx, path] : numbered) {
    if (idx != expected) throw FormatError("frames: gap in numbering at " + frame_file_name(expected));
    ++expected;
    Image img;
    try {
      img = decode_ppm(read_binary_file(path));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    if (seq.frames.empty()) {
      seq.width = img.width;
      seq.height = img.height;
    } else if (img.width != seq.width || img.height != seq.height) {
      throw FormatError("frames: dimension mismatch at " + path.filename().string());
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void write_frame_seq(const FrameSequence& seq, const fs::path& dir) {
  seq.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("frames: cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "rate", format_rational(seq.frame_rate) + "\n");
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    write_binary_file(dir / frame_file_name(i), encode_ppm(seq.frames[i]));
}

// ---------------------------------------------------------------------------
// Face track

FaceTrack parse_face_track(std::string_view text, const FrameSequence* bounds) {
  FaceTrack track;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    try {
      auto j = nlohmann::json::parse(line);
      FaceBox b;
      const auto frame = j.at("frame").get<long long>();
      if (frame < 0) throw FormatError("negative frame index");
      b.frame_index = static_cast<std::size_t>(frame);
      b.x = j.at("x").get<int>();
      b.y = j.at("y").get<int>();
      b.w = j.at("w").get<int>();
      b.h = j.at("h").get<int>();
      track.entries.push_back(b);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("face track line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("face track line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  track.validate(bounds);
  return track;
}

std::string format_face_track(const FaceTrack& track) {
  std::string out;
  for (const auto& b : track.entries) {
    nlohmann::ordered_json j;
    j["frame"] = b.frame_index;
    j["x"] = b.x;
    j["y"] = b.y;
    j["w"] = b.w;
    j["h"] = b.h;
    out += j.dump();
    out += '\n';
  }
  return out;
}

FaceTrack read_face_track(const fs::path& path, const FrameSequence* bounds) {
  return parse_face_track(read_text_file(path), bounds);
}

// ---------------------------------------------------------------------------
// Manifest

InputManifest read_manifest(const fs::path& dir) {
  const auto file = dir / "manifest.json";
  if (!fs::exists(file)) throw IoError("manifest: missing file " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  InputManifest m;
  m.root = dir;
  auto resolve = [&](const char* key, bool required) -> std::optional<fs::path> {
    if (!j.contains(key)) {
      if (required) throw FormatError(std::string("manifest: missing key '") + key + "'");
      return std::nullopt;
    }
    fs::path p = j.at(key).get<std::string>();
    if (p.is_relative()) p = dir / p;
    if (!fs::exists(p)) throw IoError(std::string("manifest: ") + key + " not found: " + p.string());
    return p;
  };
  try {
    m.audio_path = *resolve("audio", true);
    m.frames_dir = *resolve("frames", true);
    m.face_track_path = resolve("face_track", false);
    m.transcript_path = resolve("transcript", false);
    m.mt_lexicon_path = resolve("mt_lexicon", false);
    m.tts_lexicon_path = resolve("tts_lexicon", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  return m;
}

// ---------------------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dub
