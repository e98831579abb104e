#include "dub/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "dub/error.hpp"
#include "dub/kernels.hpp"

namespace dub::metrics {

void EmbeddingSequence::validate() const {
  if (vectors.cols != dim) throw InvalidArgument("embeddings: width does not match dim");
  for (double v : vectors.data)
    if (!std::isfinite(v)) throw InvalidArgument("embeddings: non-finite value");
}

std::string format_embeddings(const EmbeddingSequence& e) {
  std::string out = "emb v1 " + std::to_string(e.dim) + " " + std::to_string(e.size()) + "\n";
  char num[40];
  for (std::size_t t = 0; t < e.vectors.rows; ++t) {
    for (std::size_t d = 0; d < e.vectors.cols; ++d) {
      std::snprintf(num, sizeof num, d == 0 ? "%.17g" : " %.17g", e.vectors(t, d));
      out += num;
    }
    out += '\n';
  }
  return out;
}

EmbeddingSequence parse_embeddings(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, version;
  std::size_t dim = 0, count = 0;
  if (!(in >> magic >> version >> dim >> count) || magic != "emb" || version != "v1" || dim == 0)
    throw FormatError("emb: malformed header");
  EmbeddingSequence e;
  e.dim = dim;
  e.vectors = dsp::Matrix(count, dim);
  for (double& v : e.vectors.data)
    if (!(in >> v)) throw FormatError("emb: truncated data");
  std::string extra;
  if (in >> extra) throw FormatError("emb: trailing data");
  try {
    e.validate();
  } catch (const InvalidArgument& err) {
    throw FormatError(err.what());
  }
  return e;
}

std::size_t edit_distance(const Words& reference, const Words& hypothesis) {
  std::vector<std::size_t> prev(hypothesis.size() + 1), cur(hypothesis.size() + 1);
  for (std::size_t j = 0; j <= hypothesis.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= reference.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hypothesis.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hypothesis.size()];
}

double wer(const Words& reference, const Words& hypothesis) {
  if (reference.empty()) throw InvalidArgument("wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) /
         static_cast<double>(reference.size());
}

double corpus_wer(const std::vector<Words>& references, const std::vector<Words>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw InvalidArgument("wer: reference and hypothesis corpora differ in size");
  std::size_t edits = 0, words = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    edits += edit_distance(references[i], hypotheses[i]);
    words += references[i].size();
  }
  if (words == 0) throw InvalidArgument("wer: empty reference");
  return static_cast<double>(edits) / static_cast<double>(words);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[Words(words.begin() + static_cast<std::ptrdiff_t>(i),
                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

double bleu(const std::vector<Words>& references, const std::vector<Words>& hypotheses) {
  if (references.empty()) throw InvalidArgument("bleu: empty corpus");
  if (references.size() != hypotheses.size())
    throw InvalidArgument("bleu: reference and hypothesis corpora differ in size");
  constexpr std::size_t kMaxOrder = 4;
  std::size_t matched[kMaxOrder] = {};
  std::size_t total[kMaxOrder] = {};
  std::size_t ref_len = 0, hyp_len = 0;
  for (std::size_t s = 0; s < references.size(); ++s) {
    ref_len += references[s].size();
    hyp_len += hypotheses[s].size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto ref = count_ngrams(references[s], n);
      for (const auto& [gram, c] : count_ngrams(hypotheses[s], n)) {
        total[n - 1] += c;
        auto it = ref.find(gram);
        if (it != ref.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (total[n] == 0 || matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return bp * std::exp(log_sum / kMaxOrder);
}

namespace {

/// Index of the minimum; ties go to the offset nearest zero, then the negative one.
int argmin_offset(const std::vector<double>& row, int max_offset) {
  int best = -max_offset;
  for (int o = -max_offset + 1; o <= max_offset; ++o) {
    const double v = row[o + max_offset], b = row[best + max_offset];
    if (v < b || (v == b && std::abs(o) < std::abs(best))) best = o;
  }
  return best;
}

}  // namespace

LseResult lse(const EmbeddingSequence& video, const EmbeddingSequence& audio, int max_offset) {
  video.validate();
  audio.validate();
  if (video.dim != audio.dim) throw InvalidArgument("lse: embedding dimensions differ");
  if (video.size() == 0 || audio.size() == 0) throw InvalidArgument("lse: empty sequence");
  const auto d = kernels::offset_distances(video.vectors, audio.vectors, max_offset);
  if (d.min_dist.empty()) throw InvalidArgument("lse: no frame has full offset coverage");

  LseResult r;
  r.frames_used = d.min_dist.size();
  const double n = static_cast<double>(r.frames_used);
  const std::size_t width = static_cast<std::size_t>(2 * max_offset + 1);
  std::vector<double> per_offset(width, 0.0);
  for (std::size_t i = 0; i < d.min_dist.size(); ++i) {
    r.lse_d += d.min_dist[i];
    r.lse_c += d.mean_dist[i] - d.min_dist[i];
    const auto& row = d.distance[i];
    r.frame_offsets.push_back(argmin_offset(row, max_offset));
    for (std::size_t o = 0; o < width; ++o) per_offset[o] += row[o];
  }
  r.lse_d /= n;
  r.lse_c /= n;
  r.offset = argmin_offset(per_offset, max_offset);
  return r;
}

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit(const EmbeddingSequence& e) {
  const auto n = static_cast<Eigen::Index>(e.size());
  const auto dim = static_cast<Eigen::Index>(e.dim);
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      x(i, j) = e.vectors(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid(const EmbeddingSequence& a, const EmbeddingSequence& b) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) throw InvalidArgument("fid: embedding dimensions differ");
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("fid: need at least 2 vectors per set");
  const Gaussian ga = fit(a);
  const Gaussian gb = fit(b);
  // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2); the latter is symmetric PSD.
  const Eigen::MatrixXd root_a = psd_sqrt(ga.cov);
  const Eigen::MatrixXd inner = root_a * gb.cov * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double tr_cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (ga.mean - gb.mean).squaredNorm() + ga.cov.trace() + gb.cov.trace() -
                       2.0 * tr_cross;
  return std::max(value, 0.0);
}

double l1_image_loss(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw InvalidArgument("l1_image_loss: image dimensions differ");
  if (a.rgb.empty()) throw InvalidArgument("l1_image_loss: empty image");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i)
    sum += static_cast<std::uint64_t>(std::abs(static_cast<int>(a.rgb[i]) - static_cast<int>(b.rgb[i])));
  return static_cast<double>(sum) / (255.0 * static_cast<double>(a.rgb.size()));
}

double combine_lipgen_loss(const LossTerms& t) {
  return t.l_cgan + t.alpha * t.l_img + t.beta * t.l_sync;
}

ReferenceEmbeddings reference_embedders(const AudioBuffer& audio, const FrameSequence& frames,
                                        const FaceTrack& track,
                                        const stages::LipGeometry& geometry) {
  frames.validate();
  const std::size_t count = frames.frames.size();
  ReferenceEmbeddings out;
  out.audio.vectors = dsp::Matrix(count, 1);
  out.video.vectors = dsp::Matrix(count, 1);

  const auto rms = stages::frame_window_rms(audio, frames.frame_rate, 0, count);
  const double peak = rms.empty() ? 0.0 : *std::max_element(rms.begin(), rms.end());
  for (std::size_t f = 0; f < count; ++f)
    out.audio.vectors(f, 0) = peak < 1e-9 ? 0.0 : rms[f] / peak;

  for (std::size_t f = 0; f < count; ++f) {
    const FaceBox* box = track.find(f);
    if (box == nullptr) continue;
    const Image& img = frames.frames[f];
    std::size_t black = 0;
    for (int y = stages::lower_half_begin(*box); y < box->y + box->h; ++y)
      for (int x = box->x; x < box->x + box->w; ++x) {
        const std::uint8_t* p = img.pixel(x, y);
        if (p[0] == 0 && p[1] == 0 && p[2] == 0) ++black;
      }
    const double full = std::numbers::pi * (geometry.width_frac * box->w / 2.0) *
                        (geometry.height_frac * box->h / 2.0);
    out.video.vectors(f, 0) = std::clamp(static_cast<double>(black) / full, 0.0, 1.0);
  }
  return out;
}

}  // namespace dub::metrics
