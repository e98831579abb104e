// Serial vs OpenMP kernels. Run with OMP_NUM_THREADS set to compare scaling.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dub/dsp.hpp"
#include "dub/kernels.hpp"

using namespace dub;

namespace {

std::vector<double> signal(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

const dsp::SpectrogramConfig kCfg;

template <bool Parallel>
void BM_stft(benchmark::State& state) {
  const auto x = signal(static_cast<std::size_t>(state.range(0)) * kCfg.sample_rate);
  const auto w = dsp::hann_window(kCfg.n_fft);
  for (auto _ : state) {
    auto s = Parallel ? kernels::stft(x, w, kCfg.n_fft, kCfg.hop_length)
                      : kernels::serial::stft(x, w, kCfg.n_fft, kCfg.hop_length);
    benchmark::DoNotOptimize(s.data.data());
  }
}

template <bool Parallel>
void BM_istft(benchmark::State& state) {
  const auto x = signal(static_cast<std::size_t>(state.range(0)) * kCfg.sample_rate);
  const auto w = dsp::hann_window(kCfg.n_fft);
  const auto s = kernels::serial::stft(x, w, kCfg.n_fft, kCfg.hop_length);
  for (auto _ : state) {
    auto y = Parallel ? kernels::istft(s, w, kCfg.n_fft, kCfg.hop_length)
                      : kernels::serial::istft(s, w, kCfg.n_fft, kCfg.hop_length);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_log_mel(benchmark::State& state) {
  const auto x = signal(static_cast<std::size_t>(state.range(0)) * kCfg.sample_rate);
  const auto w = dsp::hann_window(kCfg.n_fft);
  const auto s = kernels::serial::stft(x, w, kCfg.n_fft, kCfg.hop_length);
  const auto fb = dsp::mel_filterbank(kCfg);
  for (auto _ : state) {
    auto m = Parallel ? kernels::log_mel(s, fb, dsp::kMelFloor) : kernels::serial::log_mel(s, fb, dsp::kMelFloor);
    benchmark::DoNotOptimize(m.data.data());
  }
}

template <bool Parallel>
void BM_frame_rms(benchmark::State& state) {
  const auto x = signal(static_cast<std::size_t>(state.range(0)) * kCfg.sample_rate);
  for (auto _ : state) {
    auto r = Parallel ? kernels::frame_rms(x, 640, 640) : kernels::serial::frame_rms(x, 640, 640);
    benchmark::DoNotOptimize(r.data());
  }
}

template <bool Parallel>
void BM_offset_distances(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  dsp::Matrix v(T, 512), a(T, 512);
  for (auto& e : v.data) e = n(rng);
  for (auto& e : a.data) e = n(rng);
  for (auto _ : state) {
    auto d = Parallel ? kernels::offset_distances(v, a, 15) : kernels::serial::offset_distances(v, a, 15);
    benchmark::DoNotOptimize(d.min_dist.data());
  }
}

}  // namespace

BENCHMARK(BM_stft<false>)->Name("stft/serial")->Arg(10);
BENCHMARK(BM_stft<true>)->Name("stft/omp")->Arg(10);
BENCHMARK(BM_istft<false>)->Name("istft/serial")->Arg(10);
BENCHMARK(BM_istft<true>)->Name("istft/omp")->Arg(10);
BENCHMARK(BM_log_mel<false>)->Name("log_mel/serial")->Arg(10);
BENCHMARK(BM_log_mel<true>)->Name("log_mel/omp")->Arg(10);
BENCHMARK(BM_frame_rms<false>)->Name("frame_rms/serial")->Arg(60);
BENCHMARK(BM_frame_rms<true>)->Name("frame_rms/omp")->Arg(60);
BENCHMARK(BM_offset_distances<false>)->Name("offset_distances/serial")->Arg(750);
BENCHMARK(BM_offset_distances<true>)->Name("offset_distances/omp")->Arg(750);

BENCHMARK_MAIN();
