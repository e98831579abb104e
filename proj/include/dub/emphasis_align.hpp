#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dub/dsp.hpp"

namespace dub::align {

enum class AttentionForm { kLogits, kProbabilities };

/// Per-head target x source cross-attention from a translation model.
///
/// Logits are expected to be already divided by sqrt(model_dim): the stage
/// boundary receives attention products, not the query/key projections.
struct AttentionStack {
  std::vector<dsp::Matrix> heads;  // each |T| x |S|
  AttentionForm form = AttentionForm::kProbabilities;
  int model_dim = 512;

  std::size_t head_count() const { return heads.size(); }
  std::size_t target_len() const { return heads.empty() ? 0 : heads.front().rows; }
  std::size_t source_len() const { return heads.empty() ? 0 : heads.front().cols; }

  /// Shape agreement; for probabilities also row sums of 1 +- 1e-6 and
  /// entries in [0, 1].
  void validate() const;
};

/// Half-open token range [first, second) of one word.
using TokenRange = std::pair<std::size_t, std::size_t>;

struct TokenAlignment {
  dsp::Matrix alpha;  // |T| x |S| averaged attention
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  std::optional<std::vector<TokenRange>> subword_map_src;
  std::optional<std::vector<TokenRange>> subword_map_tgt;
};

/// Row-wise softmax of every head. Probabilities pass through unchanged.
AttentionStack normalize_heads(const AttentionStack& stack);

/// Elementwise mean over heads of a normalised stack.
dsp::Matrix average_heads(const AttentionStack& stack);

/// Collapses token-level alpha to word level: source subword columns are
/// summed, target subword rows are reduced by max.
dsp::Matrix word_level_alpha(const TokenAlignment& alignment);

/// For each emphasised source word i, emphasises target argmax_j alpha[j][i]
/// (smallest j on ties). Returns the union over all emphasised sources.
std::set<std::size_t> transfer_emphasis(const TokenAlignment& alignment,
                                        const std::set<std::size_t>& emphasized_src);

/// Text form: `attn v1 <h> <T> <S> <logits|probabilities>` then h blocks of
/// T rows of S values.
std::string format_attention(const AttentionStack& stack);
AttentionStack parse_attention(std::string_view text);

}  // namespace dub::align
