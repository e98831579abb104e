#pragma once

#include <complex>
#include <span>

#include <fftw3.h>

namespace dub::detail {

/// Real-to-complex FFT of fixed length backed by FFTW. Plans are created
/// under a global lock (the FFTW planner is not reentrant); execution is
/// thread-safe and may run on any arrays.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }

  /// in: n reals, out: n/2+1 bins. Unnormalised.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

  /// in: n/2+1 bins, out: n reals, scaled by 1/n. `in` is not modified.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  int n_;
  fftw_plan r2c_ = nullptr;
  fftw_plan c2r_ = nullptr;
};

}  // namespace dub::detail
