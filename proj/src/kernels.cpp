#include "dub/kernels.hpp"

#include "kernel_bodies.hpp"

namespace dub::kernels {

dsp::Spectrum stft(std::span<const double> signal, std::span<const double> window, int n_fft,
                   int hop) {
  detail::check_stft_args(window, n_fft, hop);
  dsp::Spectrum spec;
  spec.frames = detail::stft_frames(signal.size(), n_fft, hop);
  spec.bins = static_cast<std::size_t>(n_fft / 2 + 1);
  spec.data.resize(spec.frames * spec.bins);
  if (spec.frames == 0) return spec;
  const dub::detail::RealFft fft(n_fft);
  const auto frames = static_cast<long>(spec.frames);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < frames; ++t) {
    const auto tt = static_cast<std::size_t>(t);
    detail::stft_frame(fft, signal, window, hop, tt,
                       std::span(spec.data).subspan(tt * spec.bins, spec.bins));
  }
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
  std::vector<double> segments(spec.frames * n);
  const auto frames = static_cast<long>(spec.frames);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < frames; ++t) {
    const auto tt = static_cast<std::size_t>(t);
    auto seg = std::span(segments).subspan(tt * n, n);
    fft.inverse(std::span(spec.data).subspan(tt * spec.bins, spec.bins), seg);
    for (std::size_t i = 0; i < n; ++i) seg[i] *= window[i];
  }
  // Overlap-add in frame order so the summation order matches the serial path.
  const std::size_t len = (spec.frames - 1) * static_cast<std::size_t>(hop) + n;
  std::vector<double> out(len, 0.0);
  std::vector<double> norm(len, 0.0);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const std::size_t base = t * static_cast<std::size_t>(hop);
    for (std::size_t i = 0; i < n; ++i) {
      out[base + i] += segments[t * n + i];
      norm[base + i] += window[i] * window[i];
    }
  }
  const auto total = static_cast<long>(len);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < total; ++i)
    out[static_cast<std::size_t>(i)] =
        norm[static_cast<std::size_t>(i)] > 1e-8 ? out[static_cast<std::size_t>(i)] / norm[static_cast<std::size_t>(i)] : 0.0;
  return out;
}

dsp::Matrix log_mel(const dsp::Spectrum& spec, const dsp::Matrix& filterbank, double floor) {
  if (filterbank.cols != spec.bins) throw InvalidArgument("log_mel: filterbank width mismatch");
  dsp::Matrix out(spec.frames, filterbank.rows);
  const auto frames = static_cast<long>(spec.frames);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < frames; ++t)
    detail::log_mel_frame(spec, filterbank, floor, static_cast<std::size_t>(t),
                          out.row(static_cast<std::size_t>(t)));
  return out;
}

std::vector<double> frame_rms(std::span<const double> signal, std::size_t window, std::size_t hop) {
  if (window == 0) throw InvalidArgument("frame_energy: window must be positive");
  if (hop == 0) throw InvalidArgument("frame_energy: hop must be positive");
  const std::size_t count = signal.size() < window ? 0 : 1 + (signal.size() - window) / hop;
  std::vector<double> out(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        detail::window_rms(signal, static_cast<std::size_t>(i) * hop, window);
  return out;
}

OffsetDistances offset_distances(const dsp::Matrix& video, const dsp::Matrix& audio,
                                 int max_offset) {
  detail::check_offset_args(video, audio, max_offset);
  auto [first, last] = detail::covered_range(video, audio, max_offset);
  OffsetDistances r;
  r.first_frame = first;
  const std::size_t count = last - first;
  r.min_dist.resize(count);
  r.mean_dist.resize(count);
  r.distance.resize(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    detail::offset_row(video, audio, max_offset, first + ii, r.distance[ii], r.min_dist[ii],
                       r.mean_dist[ii]);
  }
  return r;
}

}  // namespace dub::kernels
