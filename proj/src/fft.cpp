#include "fft.hpp"

#include <mutex>
#include <vector>

#include "dub/error.hpp"

namespace dub::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  if (n < 2) throw InvalidArgument("fft: length must be >= 2");
  std::vector<double> real(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> cplx(static_cast<std::size_t>(n / 2 + 1));
  auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
  std::lock_guard lock(planner_mutex());
  r2c_ = fftw_plan_dft_r2c_1d(n, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  c2r_ = fftw_plan_dft_c2r_1d(n, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (r2c_ == nullptr || c2r_ == nullptr) throw Error("fft: planner failed");
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (r2c_ != nullptr) fftw_destroy_plan(r2c_);
  if (c2r_ != nullptr) fftw_destroy_plan(c2r_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  // r2c plans leave their input intact.
  fftw_execute_dft_r2c(r2c_, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
  const double scale = 1.0 / n_;
  for (double& v : out) v *= scale;
}

}  // namespace dub::detail
