#include "dub/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dub/error.hpp"

namespace dub::prosody {

int PhonemeProsody::total_frames() const {
  int total = 0;
  for (const auto& ph : phonemes) total += ph.duration_frames;
  return total;
}

void PhonemeProsody::validate() const {
  for (const auto& ph : phonemes) {
    if (ph.duration_frames < 0) throw InvalidArgument("prosody: negative duration");
    if (!std::isfinite(ph.pitch_hz) || !std::isfinite(ph.energy))
      throw InvalidArgument("prosody: non-finite value");
    if (ph.energy < 0.0) throw InvalidArgument("prosody: negative energy");
    if (!ph.voiced && ph.pitch_hz != 0.0)
      throw InvalidArgument("prosody: unvoiced phoneme '" + ph.symbol + "' has pitch");
    if (ph.voiced && ph.pitch_hz <= 0.0)
      throw InvalidArgument("prosody: voiced phoneme '" + ph.symbol + "' needs positive pitch");
  }
}

void validate_spans(const WordSpans& spans, std::size_t phoneme_count) {
  std::size_t expected = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.begin != expected || s.end < s.begin)
      throw InvalidArgument("word spans: not contiguous at span " + std::to_string(i));
    if (i > 0 && s.word_index <= spans[i - 1].word_index)
      throw InvalidArgument("word spans: word indices not increasing");
    expected = s.end;
  }
  if (expected != phoneme_count) throw InvalidArgument("word spans: do not cover all phonemes");
}

void EmphasisPolicy::validate() const {
  if (!(duration_mult >= 1.0)) throw InvalidArgument("emphasis policy: duration_mult must be >= 1");
  if (!(energy_mult > 0.0)) throw InvalidArgument("emphasis policy: energy_mult must be > 0");
  if (!(pitch_shift_semitones >= 0.0))
    throw InvalidArgument("emphasis policy: pitch shift must be >= 0");
}

double median_voiced_pitch(const PhonemeProsody& p) {
  std::vector<double> pitches;
  for (const auto& ph : p.phonemes)
    if (ph.voiced) pitches.push_back(ph.pitch_hz);
  if (pitches.empty()) return 0.0;
  std::sort(pitches.begin(), pitches.end());
  const std::size_t n = pitches.size();
  return n % 2 == 1 ? pitches[n / 2] : 0.5 * (pitches[n / 2 - 1] + pitches[n / 2]);
}

PhonemeProsody apply_emphasis(const PhonemeProsody& p, const WordSpans& spans,
                              const std::set<std::size_t>& emphasized_words,
                              const EmphasisPolicy& policy) {
  p.validate();
  validate_spans(spans, p.phonemes.size());
  policy.validate();
  PhonemeProsody out = p;
  if (emphasized_words.empty()) return out;

  const double median = median_voiced_pitch(p);
  const double up = std::pow(2.0, policy.pitch_shift_semitones / 12.0);
  const double down = std::pow(2.0, -policy.pitch_shift_semitones / 12.0);

  for (std::size_t word : emphasized_words) {
    const auto it = std::find_if(spans.begin(), spans.end(),
                                 [&](const WordSpan& s) { return s.word_index == word; });
    if (it == spans.end())
      throw InvalidArgument("apply_emphasis: word " + std::to_string(word) + " has no span");

    double sum = 0.0;
    int voiced = 0;
    for (std::size_t i = it->begin; i < it->end; ++i) {
      if (p.phonemes[i].voiced) {
        sum += p.phonemes[i].pitch_hz;
        ++voiced;
      }
    }
    const bool at_or_above = voiced > 0 && sum / voiced >= median;
    const bool raise =
        policy.direction == PitchDirection::kExaggerate ? at_or_above : !at_or_above;

    for (std::size_t i = it->begin; i < it->end; ++i) {
      auto& ph = out.phonemes[i];
      ph.duration_frames =
          static_cast<int>(std::floor(static_cast<double>(ph.duration_frames) * policy.duration_mult + 0.5));
      ph.energy *= policy.energy_mult;
      if (ph.voiced) ph.pitch_hz *= raise ? up : down;
    }
  }
  return out;
}

std::vector<FrameProsody> length_regulate(const PhonemeProsody& p) {
  p.validate();
  std::vector<FrameProsody> frames;
  frames.reserve(static_cast<std::size_t>(p.total_frames()));
  for (std::size_t i = 0; i < p.phonemes.size(); ++i) {
    const auto& ph = p.phonemes[i];
    for (int k = 0; k < ph.duration_frames; ++k)
      frames.push_back(FrameProsody{ph.symbol, i, ph.voiced, ph.pitch_hz, ph.energy});
  }
  return frames;
}

std::string format_prosody(const PhonemeProsody& p) {
  std::string out;
  char line[160];
  for (const auto& ph : p.phonemes) {
    std::snprintf(line, sizeof line, " %d %d %.17g %.17g\n", ph.voiced ? 1 : 0, ph.duration_frames,
                  ph.pitch_hz, ph.energy);
    out += ph.symbol;
    out += line;
  }
  return out;
}

PhonemeProsody parse_prosody(std::string_view text) {
  PhonemeProsody p;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Phoneme ph;
    int voiced = 0;
    std::string extra;
    if (!(fields >> ph.symbol >> voiced >> ph.duration_frames >> ph.pitch_hz >> ph.energy) ||
        (voiced != 0 && voiced != 1) || (fields >> extra))
      throw FormatError("prosody line " + std::to_string(line_no) + ": malformed record");
    ph.voiced = voiced == 1;
    p.phonemes.push_back(std::move(ph));
  }
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return p;
}

}  // namespace dub::prosody
