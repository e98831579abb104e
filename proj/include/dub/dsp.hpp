#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dub/media_io.hpp"

namespace dub::dsp {

/// Analysis geometry shared by every stage of a pipeline run.
///
/// Frames are not centred: frame t covers samples [t*hop, t*hop + n_fft), so
/// a signal of N >= n_fft samples yields 1 + (N - n_fft) / hop frames and a
/// shorter one yields none. Many toolkits pad by n_fft/2 on both sides; this
/// one does not.
struct SpectrogramConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop_length = 256;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;

  /// Defaults with f_max at Nyquist for the given rate.
  static SpectrogramConfig for_rate(int sample_rate);

  int bins() const { return n_fft / 2 + 1; }
  std::size_t frame_count(std::size_t n_samples) const;
  void validate() const;

  bool operator==(const SpectrogramConfig&) const = default;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

/// One-sided STFT: frames x (n_fft/2 + 1) complex bins.
struct Spectrum {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(std::size_t t, std::size_t k) { return data[t * bins + k]; }
  const std::complex<double>& at(std::size_t t, std::size_t k) const { return data[t * bins + k]; }
};

/// Natural-log mel energies, T x n_mels. Every entry is >= ln(kMelFloor).
struct MelSpectrogram {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop_length = 256;
  int n_mels = 80;
  Matrix frames;

  std::size_t frame_count() const { return frames.rows; }
  bool geometry_matches(const SpectrogramConfig& cfg) const {
    return sample_rate == cfg.sample_rate && n_fft == cfg.n_fft && hop_length == cfg.hop_length &&
           n_mels == cfg.n_mels;
  }
};

inline constexpr double kMelFloor = 1e-10;

/// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

/// HTK mel scale: 2595 * log10(1 + f/700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

Spectrum stft(const AudioBuffer& buf, const SpectrogramConfig& cfg);

/// n_mels x (n_fft/2 + 1) triangular filters with unit peak height.
/// Throws InvalidArgument if some filter covers no FFT bin.
Matrix mel_filterbank(const SpectrogramConfig& cfg);

MelSpectrogram mel_spectrogram(const AudioBuffer& buf, const SpectrogramConfig& cfg);

/// RMS per window; the trailing partial window is dropped.
std::vector<double> frame_energy(const AudioBuffer& buf, std::size_t window_samples,
                                 std::size_t hop_samples);

/// Reference vocoder. Mel power minus the floor is inverted to linear
/// magnitude through the filterbank pseudo-inverse (negatives clamped to 0),
/// then phase is estimated by alternating projections starting from seeded
/// random phase.
/// Output has (T-1)*hop + n_fft samples, clamped to [-1, 1].
AudioBuffer griffin_lim(const MelSpectrogram& mel, const SpectrogramConfig& cfg, int iterations,
                        std::uint64_t seed);

/// Linear interpolation at exact rational source positions j*src/dst.
AudioBuffer resample_linear(const AudioBuffer& buf, int target_rate);

/// Text form: `mel v1 <sr> <n_fft> <hop> <n_mels> <T>` then T rows.
std::string format_mel(const MelSpectrogram& mel);
MelSpectrogram parse_mel(std::string_view text);

}  // namespace dub::dsp
