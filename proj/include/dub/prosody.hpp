#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dub::prosody {

struct Phoneme {
  std::string symbol;
  bool voiced = false;
  int duration_frames = 0;
  double pitch_hz = 0.0;  // 0 for unvoiced
  double energy = 0.0;

  bool operator==(const Phoneme&) const = default;
};

/// Phoneme-level variance-adaptor output.
struct PhonemeProsody {
  std::vector<Phoneme> phonemes;

  int total_frames() const;
  void validate() const;
  bool operator==(const PhonemeProsody&) const = default;
};

struct WordSpan {
  std::size_t word_index = 0;
  std::size_t begin = 0;  // first phoneme
  std::size_t end = 0;    // one past the last phoneme

  bool operator==(const WordSpan&) const = default;
};

/// Ordered, contiguous spans whose union is the whole phoneme list. A span
/// may be empty (a word that produced no phonemes).
using WordSpans = std::vector<WordSpan>;

void validate_spans(const WordSpans& spans, std::size_t phoneme_count);

enum class PitchDirection {
  /// Words at or above the utterance median go up, words below go down.
  kExaggerate,
  /// The opposite: words move toward the median.
  kTowardMedian,
};

struct EmphasisPolicy {
  double duration_mult = 1.25;
  double energy_mult = 1.5;
  double pitch_shift_semitones = 2.0;
  PitchDirection direction = PitchDirection::kExaggerate;

  void validate() const;
};

/// Median of the voiced pitches of the utterance; 0 if nothing is voiced.
double median_voiced_pitch(const PhonemeProsody& p);

/// Lengthens, strengthens and pitch-shifts the phonemes of emphasised
/// words. Durations are rounded half-up after scaling. The pitch direction
/// of a word is decided from its mean voiced pitch against the median of the
/// unmodified utterance. Phonemes outside emphasised words are untouched.
PhonemeProsody apply_emphasis(const PhonemeProsody& p, const WordSpans& spans,
                              const std::set<std::size_t>& emphasized_words,
                              const EmphasisPolicy& policy = {});

struct FrameProsody {
  std::string symbol;
  std::size_t phoneme_index = 0;
  bool voiced = false;
  double pitch_hz = 0.0;
  double energy = 0.0;

  bool operator==(const FrameProsody&) const = default;
};

/// Repeats each phoneme duration_frames times.
std::vector<FrameProsody> length_regulate(const PhonemeProsody& p);

/// One record per line: `symbol voiced dur pitch energy`.
std::string format_prosody(const PhonemeProsody& p);
PhonemeProsody parse_prosody(std::string_view text);

}  // namespace dub::prosody
