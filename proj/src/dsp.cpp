#include "dub/dsp.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "dub/error.hpp"
#include "dub/kernels.hpp"

namespace dub::dsp {

SpectrogramConfig SpectrogramConfig::for_rate(int sample_rate) {
  SpectrogramConfig cfg;
  cfg.sample_rate = sample_rate;
  cfg.f_max = sample_rate / 2.0;
  return cfg;
}

std::size_t SpectrogramConfig::frame_count(std::size_t n_samples) const {
  if (n_samples < static_cast<std::size_t>(n_fft)) return 0;
  return 1 + (n_samples - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop_length);
}

void SpectrogramConfig::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("spectrogram: sample_rate must be positive");
  if (n_fft < 2) throw InvalidArgument("spectrogram: n_fft must be >= 2");
  if (hop_length <= 0 || hop_length > n_fft)
    throw InvalidArgument("spectrogram: hop_length must be in [1, n_fft]");
  if (n_mels <= 0) throw InvalidArgument("spectrogram: n_mels must be positive");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw InvalidArgument("spectrogram: need 0 <= f_min < f_max <= sample_rate/2");
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

void require_mono(const AudioBuffer& buf, const char* op) {
  if (!buf.is_mono()) throw InvalidArgument(std::string(op) + ": input must be mono");
}

}  // namespace

Spectrum stft(const AudioBuffer& buf, const SpectrogramConfig& cfg) {
  cfg.validate();
  require_mono(buf, "stft");
  const auto window = hann_window(cfg.n_fft);
  return kernels::stft(buf.samples, window, cfg.n_fft, cfg.hop_length);
}

Matrix mel_filterbank(const SpectrogramConfig& cfg) {
  cfg.validate();
  const auto bins = static_cast<std::size_t>(cfg.bins());
  const auto n_mels = static_cast<std::size_t>(cfg.n_mels);
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));

  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], peak = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double rise = (f - lo) / (peak - lo);
      const double fall = (hi - f) / (hi - peak);
      const double v = std::max(0.0, std::min(rise, fall));
      fb(m, k) = std::min(v, 1.0);
      any = any || fb(m, k) > 0.0;
    }
    if (!any)
      throw InvalidArgument("mel_filterbank: filter " + std::to_string(m) +
                            " covers no FFT bin; n_mels too large for n_fft");
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& buf, const SpectrogramConfig& cfg) {
  const auto spec = stft(buf, cfg);
  MelSpectrogram mel;
  mel.sample_rate = cfg.sample_rate;
  mel.n_fft = cfg.n_fft;
  mel.hop_length = cfg.hop_length;
  mel.n_mels = cfg.n_mels;
  mel.frames = kernels::log_mel(spec, mel_filterbank(cfg), kMelFloor);
  return mel;
}

std::vector<double> frame_energy(const AudioBuffer& buf, std::size_t window_samples,
                                 std::size_t hop_samples) {
  require_mono(buf, "frame_energy");
  return kernels::frame_rms(buf.samples, window_samples, hop_samples);
}

namespace {

/// Mel power -> linear magnitude via the Moore-Penrose pseudo-inverse of
/// the filterbank.
Matrix mel_to_magnitude(const MelSpectrogram& mel, const Matrix& fb) {
  Eigen::MatrixXd fb_e(fb.rows, fb.cols);
  for (std::size_t r = 0; r < fb.rows; ++r)
    for (std::size_t c = 0; c < fb.cols; ++c) fb_e(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = fb(r, c);
  const Eigen::MatrixXd pinv = fb_e.completeOrthogonalDecomposition().pseudoInverse();

  Matrix mag(mel.frames.rows, fb.cols);
  Eigen::VectorXd power(static_cast<Eigen::Index>(fb.rows));
  for (std::size_t t = 0; t < mel.frames.rows; ++t) {
    for (std::size_t m = 0; m < fb.rows; ++m)
      power(static_cast<Eigen::Index>(m)) = std::max(std::exp(mel.frames(t, m)) - kMelFloor, 0.0);
    const Eigen::VectorXd lin = pinv * power;
    for (std::size_t k = 0; k < fb.cols; ++k)
      mag(t, k) = std::sqrt(std::max(lin(static_cast<Eigen::Index>(k)), 0.0));
  }
  return mag;
}

}  // namespace

AudioBuffer griffin_lim(const MelSpectrogram& mel, const SpectrogramConfig& cfg, int iterations,
                        std::uint64_t seed) {
  cfg.validate();
  if (!mel.geometry_matches(cfg) || mel.frames.cols != static_cast<std::size_t>(cfg.n_mels))
    throw InvalidArgument("griffin_lim: mel geometry does not match config");
  if (iterations < 0) throw InvalidArgument("griffin_lim: iterations must be >= 0");

  AudioBuffer out{cfg.sample_rate, 1, {}};
  const std::size_t frames = mel.frames.rows;
  if (frames == 0) return out;

  const auto window = hann_window(cfg.n_fft);
  const Matrix mag = mel_to_magnitude(mel, mel_filterbank(cfg));

  Spectrum spec;
  spec.frames = frames;
  spec.bins = mag.cols;
  spec.data.resize(frames * spec.bins);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    spec.data[i] = std::polar(mag.data[i], 2.0 * std::numbers::pi * u);
  }

  for (int it = 0; it < iterations; ++it) {
    const auto signal = kernels::istft(spec, window, cfg.n_fft, cfg.hop_length);
    const auto rebuilt = kernels::stft(signal, window, cfg.n_fft, cfg.hop_length);
    for (std::size_t i = 0; i < spec.data.size(); ++i) {
      const double a = std::abs(rebuilt.data[i]);
      spec.data[i] = a > 1e-12 ? rebuilt.data[i] * (mag.data[i] / a)
                               : std::complex<double>(mag.data[i], 0.0);
    }
  }
  out.samples = kernels::istft(spec, window, cfg.n_fft, cfg.hop_length);
  for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

AudioBuffer resample_linear(const AudioBuffer& buf, int target_rate) {
  buf.validate();
  if (target_rate <= 0) throw InvalidArgument("resample: target rate must be positive");
  if (target_rate == buf.sample_rate) return buf;

  const auto src = static_cast<std::int64_t>(buf.sample_rate);
  const auto dst = static_cast<std::int64_t>(target_rate);
  const auto n_in = static_cast<std::int64_t>(buf.frame_count());
  const std::int64_t n_out = (n_in * dst + src / 2) / src;
  const auto ch = static_cast<std::size_t>(buf.channels);

  AudioBuffer out{target_rate, buf.channels, {}};
  out.samples.resize(static_cast<std::size_t>(n_out) * ch);
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t num = j * src;
    const std::int64_t i0 = num / dst;
    const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    const std::int64_t i1 = std::min(i0 + 1, n_in - 1);
    for (std::size_t c = 0; c < ch; ++c) {
      const double a = buf.samples[static_cast<std::size_t>(i0) * ch + c];
      const double b = buf.samples[static_cast<std::size_t>(i1) * ch + c];
      out.samples[static_cast<std::size_t>(j) * ch + c] = a + (b - a) * frac;
    }
  }
  return out;
}

std::string format_mel(const MelSpectrogram& mel) {
  std::string out = "mel v1 " + std::to_string(mel.sample_rate) + " " + std::to_string(mel.n_fft) +
                    " " + std::to_string(mel.hop_length) + " " + std::to_string(mel.n_mels) + " " +
                    std::to_string(mel.frames.rows) + "\n";
  char num[40];
  for (std::size_t t = 0; t < mel.frames.rows; ++t) {
    for (std::size_t m = 0; m < mel.frames.cols; ++m) {
      std::snprintf(num, sizeof num, m == 0 ? "%.9g" : " %.9g", mel.frames(t, m));
      out += num;
    }
    out += '\n';
  }
  return out;
}

MelSpectrogram parse_mel(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, version;
  MelSpectrogram mel;
  std::size_t frames = 0;
  if (!(in >> magic >> version >> mel.sample_rate >> mel.n_fft >> mel.hop_length >> mel.n_mels >>
        frames) ||
      magic != "mel" || version != "v1")
    throw FormatError("mel: malformed header");
  if (mel.sample_rate <= 0 || mel.n_fft <= 0 || mel.hop_length <= 0 || mel.n_mels <= 0)
    throw FormatError("mel: invalid geometry");
  mel.frames = Matrix(frames, static_cast<std::size_t>(mel.n_mels));
  for (double& v : mel.frames.data)
    if (!(in >> v)) throw FormatError("mel: truncated matrix");
  std::string extra;
  if (in >> extra) throw FormatError("mel: trailing data");
  return mel;
}

}  // namespace dub::dsp
