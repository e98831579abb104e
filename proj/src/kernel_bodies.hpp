#pragma once

// Per-iteration bodies shared by the parallel kernels and their serial
// references. Only the loop scheduling differs between the two.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dub/error.hpp"
#include "dub/kernels.hpp"
#include "fft.hpp"

namespace dub::kernels::detail {

inline void check_stft_args(std::span<const double> window, int n_fft, int hop) {
  if (n_fft < 2) throw InvalidArgument("stft: n_fft must be >= 2");
  if (hop <= 0) throw InvalidArgument("stft: hop must be positive");
  if (window.size() != static_cast<std::size_t>(n_fft))
    throw InvalidArgument("stft: window length must equal n_fft");
}

inline std::size_t stft_frames(std::size_t n, int n_fft, int hop) {
  if (n < static_cast<std::size_t>(n_fft)) return 0;
  return 1 + (n - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop);
}

inline void stft_frame(const dub::detail::RealFft& fft, std::span<const double> signal,
                       std::span<const double> window, int hop, std::size_t t,
                       std::span<std::complex<double>> out) {
  const std::size_t n = window.size();
  std::vector<double> buf(n);
  const double* src = signal.data() + t * static_cast<std::size_t>(hop);
  for (std::size_t i = 0; i < n; ++i) buf[i] = src[i] * window[i];
  fft.forward(buf, out);
}

inline void log_mel_frame(const dsp::Spectrum& spec, const dsp::Matrix& fb, double floor,
                          std::size_t t, std::span<double> out) {
  std::vector<double> power(spec.bins);
  for (std::size_t k = 0; k < spec.bins; ++k) power[k] = std::norm(spec.at(t, k));
  for (std::size_t m = 0; m < fb.rows; ++m) {
    const auto filt = fb.row(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.bins; ++k) acc += filt[k] * power[k];
    out[m] = std::log(std::max(acc, floor));
  }
}

inline double window_rms(std::span<const double> signal, std::size_t start, std::size_t window) {
  double acc = 0.0;
  for (std::size_t i = start; i < start + window; ++i) acc += signal[i] * signal[i];
  return std::sqrt(acc / static_cast<double>(window));
}

inline void check_offset_args(const dsp::Matrix& video, const dsp::Matrix& audio, int max_offset) {
  if (video.cols != audio.cols) throw InvalidArgument("lse: embedding dimensions differ");
  if (max_offset < 0) throw InvalidArgument("lse: max_offset must be non-negative");
}

/// Frames t with t - max_offset >= 0 and t + max_offset < |audio|.
inline std::pair<std::size_t, std::size_t> covered_range(const dsp::Matrix& video,
                                                         const dsp::Matrix& audio, int max_offset) {
  const auto off = static_cast<std::size_t>(max_offset);
  const std::size_t first = off;
  if (audio.rows <= off) return {first, first};
  const std::size_t last = std::min(video.rows, audio.rows - off);
  return {first, std::max(first, last)};
}

inline void offset_row(const dsp::Matrix& video, const dsp::Matrix& audio, int max_offset,
                       std::size_t t, std::vector<double>& dist, double& min_d, double& mean_d) {
  const std::size_t width = static_cast<std::size_t>(2 * max_offset + 1);
  dist.assign(width, 0.0);
  min_d = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (int o = -max_offset; o <= max_offset; ++o) {
    const auto a = audio.row(static_cast<std::size_t>(static_cast<long>(t) + o));
    const auto v = video.row(t);
    double acc = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) {
      const double diff = v[d] - a[d];
      acc += diff * diff;
    }
    const double e = std::sqrt(acc);
    dist[static_cast<std::size_t>(o + max_offset)] = e;
    min_d = std::min(min_d, e);
    sum += e;
  }
  mean_d = sum / static_cast<double>(width);
}

}  // namespace dub::kernels::detail
