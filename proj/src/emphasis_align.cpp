#include "dub/emphasis_align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dub/error.hpp"

namespace dub::align {

void AttentionStack::validate() const {
  if (heads.empty()) throw InvalidArgument("attention: no heads");
  const auto rows = heads.front().rows;
  const auto cols = heads.front().cols;
  for (const auto& h : heads) {
    if (h.rows != rows || h.cols != cols) throw InvalidArgument("attention: heads differ in shape");
    for (double v : h.data)
      if (!std::isfinite(v)) throw InvalidArgument("attention: non-finite entry");
    if (form != AttentionForm::kProbabilities) continue;
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (double v : h.row(r)) {
        if (v < 0.0 || v > 1.0) throw InvalidArgument("attention: probability outside [0, 1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("attention: row does not sum to 1");
    }
  }
}

AttentionStack normalize_heads(const AttentionStack& stack) {
  if (stack.form == AttentionForm::kProbabilities) return stack;
  stack.validate();
  AttentionStack out = stack;
  out.form = AttentionForm::kProbabilities;
  for (auto& head : out.heads) {
    for (std::size_t r = 0; r < head.rows; ++r) {
      auto row = head.row(r);
      if (row.empty()) continue;
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (double& v : row) v /= sum;
    }
  }
  return out;
}

dsp::Matrix average_heads(const AttentionStack& stack) {
  if (stack.heads.empty()) throw InvalidArgument("average_heads: h = 0");
  if (stack.form != AttentionForm::kProbabilities)
    throw InvalidArgument("average_heads: stack must be normalised first");
  stack.validate();
  dsp::Matrix mean(stack.target_len(), stack.source_len());
  const double h = static_cast<double>(stack.heads.size());
  std::vector<double> vals(stack.heads.size());
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = stack.heads[k].data[i];
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    mean.data[i] = sum / h;
  }
  return mean;
}

namespace {

void check_word_map(const std::vector<TokenRange>& map, std::size_t tokens, const char* side) {
  std::size_t expected = 0;
  for (const auto& [first, last] : map) {
    if (first != expected || last <= first)
      throw InvalidArgument(std::string("alignment: ") + side +
                            " subword map must be contiguous non-empty ranges");
    expected = last;
  }
  if (expected != tokens)
    throw InvalidArgument(std::string("alignment: ") + side + " subword map does not cover all tokens");
}

}  // namespace

dsp::Matrix word_level_alpha(const TokenAlignment& alignment) {
  const auto& alpha = alignment.alpha;
  std::vector<TokenRange> src, tgt;
  if (alignment.subword_map_src) {
    check_word_map(*alignment.subword_map_src, alpha.cols, "source");
    src = *alignment.subword_map_src;
  } else {
    for (std::size_t c = 0; c < alpha.cols; ++c) src.emplace_back(c, c + 1);
  }
  if (alignment.subword_map_tgt) {
    check_word_map(*alignment.subword_map_tgt, alpha.rows, "target");
    tgt = *alignment.subword_map_tgt;
  } else {
    for (std::size_t r = 0; r < alpha.rows; ++r) tgt.emplace_back(r, r + 1);
  }

  dsp::Matrix words(tgt.size(), src.size());
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t r = tgt[j].first; r < tgt[j].second; ++r) {
        double sum = 0.0;
        for (std::size_t c = src[i].first; c < src[i].second; ++c) sum += alpha(r, c);
        best = std::max(best, sum);
      }
      words(j, i) = best;
    }
  }
  return words;
}

std::set<std::size_t> transfer_emphasis(const TokenAlignment& alignment,
                                        const std::set<std::size_t>& emphasized_src) {
  std::set<std::size_t> out;
  if (emphasized_src.empty()) return out;
  const dsp::Matrix alpha = word_level_alpha(alignment);
  if (alpha.rows == 0) throw InvalidArgument("transfer_emphasis: empty target sequence");
  for (std::size_t i : emphasized_src) {
    if (i >= alpha.cols)
      throw InvalidArgument("transfer_emphasis: source index " + std::to_string(i) + " out of range");
    std::size_t best = 0;
    for (std::size_t j = 1; j < alpha.rows; ++j)
      if (alpha(j, i) > alpha(best, i)) best = j;
    out.insert(best);
  }
  return out;
}

std::string format_attention(const AttentionStack& stack) {
  std::string out = "attn v1 " + std::to_string(stack.head_count()) + " " +
                    std::to_string(stack.target_len()) + " " + std::to_string(stack.source_len()) +
                    (stack.form == AttentionForm::kLogits ? " logits\n" : " probabilities\n");
  char num[40];
  for (const auto& head : stack.heads) {
    for (std::size_t r = 0; r < head.rows; ++r) {
      for (std::size_t c = 0; c < head.cols; ++c) {
        std::snprintf(num, sizeof num, c == 0 ? "%.17g" : " %.17g", head(r, c));
        out += num;
      }
      out += '\n';
    }
  }
  return out;
}

AttentionStack parse_attention(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, version, form;
  std::size_t h = 0, t = 0, s = 0;
  if (!(in >> magic >> version >> h >> t >> s >> form) || magic != "attn" || version != "v1")
    throw FormatError("attn: malformed header");
  AttentionStack stack;
  if (form == "logits") {
    stack.form = AttentionForm::kLogits;
  } else if (form == "probabilities") {
    stack.form = AttentionForm::kProbabilities;
  } else {
    throw FormatError("attn: unknown form '" + form + "'");
  }
  if (h == 0) throw FormatError("attn: h must be positive");
  stack.heads.assign(h, dsp::Matrix(t, s));
  for (auto& head : stack.heads)
    for (double& v : head.data)
      if (!(in >> v)) throw FormatError("attn: truncated data");
  std::string extra;
  if (in >> extra) throw FormatError("attn: trailing data");
  try {
    stack.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("attn: ") + e.what());
  }
  return stack;
}

}  // namespace dub::align
