#include "dub/kernels.hpp"

#include "kernel_bodies.hpp"

namespace dub::kernels::serial {

dsp::Spectrum stft(std::span<const double> signal, std::span<const double> window, int n_fft,
                   int hop) {
  detail::check_stft_args(window, n_fft, hop);
  dsp::Spectrum spec;
  spec.frames = detail::stft_frames(signal.size(), n_fft, hop);
  spec.bins = static_cast<std::size_t>(n_fft / 2 + 1);
  spec.data.resize(spec.frames * spec.bins);
  if (spec.frames == 0) return spec;
  const dub::detail::RealFft fft(n_fft);
  for (std::size_t t = 0; t < spec.frames; ++t)
    detail::stft_frame(fft, signal, window, hop, t,
                       std::span(spec.data).subspan(t * spec.bins, spec.bins));
  return spec;
}

std::vector<double> istft(const dsp::Spectrum& spec, std::span<const double> window, int n_fft,
                          int hop) {
  detail::check_stft_args(window, n_fft, hop);
  if (spec.frames == 0) return {};
  if (spec.bins != static_cast<std::size_t>(n_fft / 2 + 1))
    throw InvalidArgument("istft: bin count does not match n_fft");
  const auto n = static_cast<std::size_t>(n_fft);
  const dub::detail::RealFft fft(n_fft);
  const std::size_t len = (spec.frames - 1) * static_cast<std::size_t>(hop) + n;
  std::vector<double> out(len, 0.0);
  std::vector<double> norm(len, 0.0);
  std::vector<double> seg(n);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    fft.inverse(std::span(spec.data).subspan(t * spec.bins, spec.bins), seg);
    const std::size_t base = t * static_cast<std::size_t>(hop);
    for (std::size_t i = 0; i < n; ++i) {
      out[base + i] += seg[i] * window[i];
      norm[base + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < len; ++i) out[i] = norm[i] > 1e-8 ? out[i] / norm[i] : 0.0;
  return out;
}

dsp::Matrix log_mel(const dsp::Spectrum& spec, const dsp::Matrix& filterbank, double floor) {
  if (filterbank.cols != spec.bins) throw InvalidArgument("log_mel: filterbank width mismatch");
  dsp::Matrix out(spec.frames, filterbank.rows);
  for (std::size_t t = 0; t < spec.frames; ++t)
    detail::log_mel_frame(spec, filterbank, floor, t, out.row(t));
  return out;
}

std::vector<double> frame_rms(std::span<const double> signal, std::size_t window, std::size_t hop) {
  if (window == 0) throw InvalidArgument("frame_energy: window must be positive");
  if (hop == 0) throw InvalidArgument("frame_energy: hop must be positive");
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= signal.size(); start += hop)
    out.push_back(detail::window_rms(signal, start, window));
  return out;
}

OffsetDistances offset_distances(const dsp::Matrix& video, const dsp::Matrix& audio,
                                 int max_offset) {
  detail::check_offset_args(video, audio, max_offset);
  auto [first, last] = detail::covered_range(video, audio, max_offset);
  OffsetDistances r;
  r.first_frame = first;
  for (std::size_t t = first; t < last; ++t) {
    r.distance.emplace_back();
    r.min_dist.push_back(0.0);
    r.mean_dist.push_back(0.0);
    detail::offset_row(video, audio, max_offset, t, r.distance.back(), r.min_dist.back(),
                       r.mean_dist.back());
  }
  return r;
}

}  // namespace dub::kernels::serial
