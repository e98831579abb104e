#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dub::ssml {

enum class EmphasisLevel { kReduced, kModerate, kStrong };

std::string_view level_name(EmphasisLevel level);
std::optional<EmphasisLevel> parse_level(std::string_view name);

struct Run {
  std::vector<std::string> words;
  std::optional<EmphasisLevel> emphasis;

  bool operator==(const Run&) const = default;
};

/// Canonical form: every run has words and adjacent runs differ in emphasis.
struct Document {
  std::vector<Run> runs;

  std::vector<std::string> words() const;
  /// Indices of words carrying the given level (any level when nullopt).
  std::set<std::size_t> emphasized(std::optional<EmphasisLevel> level = std::nullopt) const;
  bool operator==(const Document&) const = default;
};

/// `<speak>` document wrapping each maximal run of emphasised words in one
/// `<emphasis level="...">` element. Words are joined by single spaces.
std::string emit(const std::vector<std::string>& tokens, const std::set<std::size_t>& emphasized,
                 EmphasisLevel level = EmphasisLevel::kStrong);

/// Accepts `<speak>` (any attributes), `<emphasis [level="..."]>`, text and
/// the five predefined XML entities. Anything else (other SSML elements,
/// nested emphasis, unknown entities) throws FormatError.
Document parse(std::string_view text);

/// &amp; &lt; &gt; &quot; escaping.
std::string escape(std::string_view text);

}  // namespace dub::ssml
