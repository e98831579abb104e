#pragma once

// Slow, obviously-correct reference computations the library is checked
// against. Nothing here calls into dub_core.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Words = std::vector<std::string>;

inline std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

/// Unpadded Hann STFT by direct summation.
inline std::vector<std::vector<std::complex<double>>> naive_stft(const std::vector<double>& x,
                                                                 int n_fft, int hop) {
  std::vector<std::vector<std::complex<double>>> out;
  if (x.size() < static_cast<std::size_t>(n_fft)) return out;
  const auto w = hann(n_fft);
  std::vector<long double> c(n_fft), s(n_fft);
  for (int i = 0; i < n_fft; ++i) {
    const long double ang = -2.0L * std::numbers::pi_v<long double> * i / n_fft;
    c[i] = std::cos(ang);
    s[i] = std::sin(ang);
  }
  const std::size_t frames = 1 + (x.size() - n_fft) / hop;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<std::complex<double>> row(n_fft / 2 + 1);
    for (int k = 0; k <= n_fft / 2; ++k) {
      long double re = 0, im = 0;
      for (int n = 0; n < n_fft; ++n) {
        const auto idx = static_cast<std::size_t>(k) * n % n_fft;
        const long double v = x[t * hop + n] * w[n];
        re += v * c[idx];
        im += v * s[idx];
      }
      row[k] = {static_cast<double>(re), static_cast<double>(im)};
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline double htk_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double htk_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Triangular HTK filterbank, unit peak, built straight from the definition.
inline std::vector<std::vector<double>> filterbank(int sr, int n_fft, int n_mels, double f_min,
                                                   double f_max) {
  std::vector<double> pts(n_mels + 2);
  const double lo = htk_mel(f_min), hi = htk_mel(f_max);
  for (int i = 0; i < n_mels + 2; ++i) pts[i] = htk_hz(lo + (hi - lo) * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(n_fft / 2 + 1, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    for (int k = 0; k <= n_fft / 2; ++k) {
      const double f = static_cast<double>(k) * sr / n_fft;
      double v = 0.0;
      if (f >= pts[m] && f <= pts[m + 1] && pts[m + 1] > pts[m])
        v = (f - pts[m]) / (pts[m + 1] - pts[m]);
      else if (f > pts[m + 1] && f <= pts[m + 2] && pts[m + 2] > pts[m + 1])
        v = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
      fb[m][k] = std::max(0.0, v);
    }
  }
  return fb;
}

/// ln(max(fb * |X|^2, 1e-10)) from the naive STFT.
inline std::vector<std::vector<double>> log_mel(const std::vector<double>& x, int sr, int n_fft,
                                                int hop, int n_mels, double f_min, double f_max) {
  const auto spec = naive_stft(x, n_fft, hop);
  const auto fb = filterbank(sr, n_fft, n_mels, f_min, f_max);
  std::vector<std::vector<double>> out;
  for (const auto& row : spec) {
    std::vector<double> m(n_mels);
    for (int b = 0; b < n_mels; ++b) {
      long double acc = 0;
      for (std::size_t k = 0; k < row.size(); ++k) acc += fb[b][k] * std::norm(row[k]);
      m[b] = std::log(std::max(static_cast<double>(acc), 1e-10));
    }
    out.push_back(std::move(m));
  }
  return out;
}

/// Word-level edit distance by plain recursion over (i, j) with memo.
inline std::size_t edit_distance(const Words& a, const Words& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(0, 0);
}

/// Corpus BLEU-4 by counting every n-gram into maps.
inline double bleu(const std::vector<Words>& refs, const std::vector<Words>& hyps) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double ref_len = 0, hyp_len = 0;
  for (std::size_t s = 0; s < refs.size(); ++s) {
    ref_len += refs[s].size();
    hyp_len += hyps[s].size();
    for (int n = 1; n <= 4; ++n) {
      std::map<Words, int> rc, hc;
      for (std::size_t i = 0; i + n <= refs[s].size(); ++i)
        ++rc[Words(refs[s].begin() + i, refs[s].begin() + i + n)];
      for (std::size_t i = 0; i + n <= hyps[s].size(); ++i)
        ++hc[Words(hyps[s].begin() + i, hyps[s].begin() + i + n)];
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(g);
        match[n - 1] += std::min(c, it == rc.end() ? 0 : it->second);
      }
    }
  }
  double logp = 0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0 || total[n] == 0) return 0.0;
    logp += std::log(match[n] / total[n]) / 4.0;
  }
  const double bp = hyp_len == 0 ? 0.0 : std::exp(std::min(0.0, 1.0 - ref_len / hyp_len));
  return bp * std::exp(logp);
}

struct Lse {
  double d = 0, c = 0;
  std::vector<int> argmin;
  std::size_t frames = 0;
};

/// Double loop over frames and offsets.
inline Lse lse(const std::vector<std::vector<double>>& v, const std::vector<std::vector<double>>& a,
               int max_offset) {
  Lse r;
  const long T = static_cast<long>(v.size()), A = static_cast<long>(a.size());
  for (long t = 0; t < T; ++t) {
    if (t - max_offset < 0 || t + max_offset >= A) continue;
    double mn = 1e300, sum = 0;
    int arg = 0;
    for (int o = -max_offset; o <= max_offset; ++o) {
      double s = 0;
      for (std::size_t d = 0; d < v[t].size(); ++d) {
        const double e = v[t][d] - a[t + o][d];
        s += e * e;
      }
      const double dist = std::sqrt(s);
      sum += dist;
      if (dist < mn || (dist == mn && std::abs(o) < std::abs(arg))) mn = dist, arg = o;
    }
    r.d += mn;
    r.c += sum / (2 * max_offset + 1) - mn;
    r.argmin.push_back(arg);
    ++r.frames;
  }
  if (r.frames) r.d /= r.frames, r.c /= r.frames;
  return r;
}

/// 1-D Frechet distance: (mu1-mu2)^2 + (s1-s2)^2 with unbiased sigmas.
inline double fid_1d(const std::vector<double>& a, const std::vector<double>& b) {
  auto stats = [](const std::vector<double>& x) {
    double m = 0;
    for (double v : x) m += v;
    m /= x.size();
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::make_pair(m, std::sqrt(s / (x.size() - 1)));
  };
  auto [m1, s1] = stats(a);
  auto [m2, s2] = stats(b);
  return (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
}

/// Column argmax with the smallest row winning ties.
inline std::set<std::size_t> argmax_transfer(const std::vector<std::vector<double>>& alpha,
                                             const std::set<std::size_t>& src) {
  std::set<std::size_t> out;
  for (std::size_t i : src) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < alpha.size(); ++j)
      if (alpha[j][i] > alpha[best][i]) best = j;
    out.insert(best);
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
  double mx = -1e300;
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> e(row.size());
  double s = 0;
  for (std::size_t i = 0; i < row.size(); ++i) s += e[i] = std::exp(row[i] - mx);
  for (double& v : e) v /= s;
  return e;
}

/// y[j] = x at position j*src/dst by linear interpolation, clamped at the end.
inline std::vector<double> resample(const std::vector<double>& x, int src, int dst) {
  const std::size_t n = static_cast<std::size_t>(
      (static_cast<unsigned long long>(x.size()) * dst + src / 2) / src);
  std::vector<double> y(n);
  for (std::size_t j = 0; j < n; ++j) {
    const long double pos = static_cast<long double>(j) * src / dst;
    const std::size_t i = static_cast<std::size_t>(pos);
    const long double frac = pos - i;
    if (i + 1 < x.size())
      y[j] = static_cast<double>(x[i] + (x[i + 1] - x[i]) * frac);
    else
      y[j] = x.empty() ? 0.0 : x.back();
  }
  return y;
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n, double amp = 1.0) {
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

}  // namespace oracle
