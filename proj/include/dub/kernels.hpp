#pragma once

// Data-parallel inner loops. Every kernel in `dub::kernels` is OpenMP
// parallel over independent frames and writes each output element from
// exactly one iteration, so results are bitwise identical to the serial
// versions in `dub::kernels::serial` regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "dub/dsp.hpp"

namespace dub::kernels {

/// Hann-windowed one-sided STFT of `signal`, no padding.
dsp::Spectrum stft(std::span<const double> signal, std::span<const double> window, int n_fft,
                   int hop);

/// Windowed overlap-add inverse STFT, normalised by the summed squared
/// window. Output length (frames-1)*hop + n_fft.
std::vector<double> istft(const dsp::Spectrum& spec, std::span<const double> window, int n_fft,
                          int hop);

/// ln(max(fb * |X|^2, floor)), frames x n_mels.
dsp::Matrix log_mel(const dsp::Spectrum& spec, const dsp::Matrix& filterbank, double floor);

std::vector<double> frame_rms(std::span<const double> signal, std::size_t window, std::size_t hop);

/// Per-frame minimum and mean of ||v_t - a_{t+o}|| over o in
/// [-max_offset, max_offset], for the frames t with full offset coverage.
struct OffsetDistances {
  std::size_t first_frame = 0;
  std::vector<double> min_dist;
  std::vector<double> mean_dist;
  /// distance[t - first_frame][o + max_offset]
  std::vector<std::vector<double>> distance;
};
OffsetDistances offset_distances(const dsp::Matrix& video, const dsp::Matrix& audio, int max_offset);

namespace serial {

dsp::Spectrum stft(std::span<const double> signal, std::span<const double> window, int n_fft,
                   int hop);
std::vector<double> istft(const dsp::Spectrum& spec, std::span<const double> window, int n_fft,
                          int hop);
dsp::Matrix log_mel(const dsp::Spectrum& spec, const dsp::Matrix& filterbank, double floor);
std::vector<double> frame_rms(std::span<const double> signal, std::size_t window, std::size_t hop);
OffsetDistances offset_distances(const dsp::Matrix& video, const dsp::Matrix& audio, int max_offset);

}  // namespace serial

}  // namespace dub::kernels
