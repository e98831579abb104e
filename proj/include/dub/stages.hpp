#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dub/dsp.hpp"
#include "dub/emphasis_align.hpp"
#include "dub/media_io.hpp"
#include "dub/prosody.hpp"
#include "dub/ssml.hpp"

/// Deterministic stand-ins for every model in the dubbing cascade. Each one
/// is a pure function of its inputs and an explicit seed.
namespace dub::stages {

struct Word {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  bool emphasized = false;

  bool operator==(const Word&) const = default;
};

/// Timed words of one utterance with binary emphasis flags.
struct EmphasisTranscript {
  std::vector<Word> words;
  std::string language = "en";

  std::vector<std::string> texts() const;
  std::set<std::size_t> emphasized() const;
  void validate() const;
  bool operator==(const EmphasisTranscript&) const = default;
};

/// `transcript v1 <lang> <n>` then `<start> <end> <0|1> <word>` per line.
std::string format_transcript(const EmphasisTranscript& t);
EmphasisTranscript parse_transcript(std::string_view text);

/// Timing sidecar: `<start> <end> <word>` per line, blank lines between
/// utterances, `#` starts a comment line.
std::vector<EmphasisTranscript> parse_sidecar(std::string_view text, std::string language = "en");

// ---------------------------------------------------------------------------

struct AsrConfig {
  double z_threshold = 1.0;
};

/// Flags a word as emphasised when the z-score of its RMS against the
/// utterance (population sigma) exceeds the threshold. Nothing is flagged
/// when sigma < 1e-9.
EmphasisTranscript stub_asr(const AudioBuffer& audio, const EmphasisTranscript& words,
                            const AsrConfig& cfg = {});

// ---------------------------------------------------------------------------

/// Case-insensitive bilingual word lexicon; the first entry for a key wins.
struct LexiconMtConfig {
  std::map<std::string, std::string> entries;  // lower-cased source -> target
  int heads = 8;
  int model_dim = 512;

  void add(std::string_view source, std::string_view target);
  std::string translate(std::string_view word) const;
};

/// `source target` per line, `#` comments.
LexiconMtConfig parse_mt_lexicon(std::string_view text);

struct MtResult {
  std::vector<std::string> target_words;
  align::AttentionStack attention;
  std::set<std::size_t> emphasized_target;
  std::string ssml;
};

/// Word-for-word monotone translation (OOV passes through). Emits one-hot
/// attention heads and maps emphasis through transfer_emphasis.
MtResult lexicon_mt(const EmphasisTranscript& src, const LexiconMtConfig& cfg);

// ---------------------------------------------------------------------------

struct TtsLexicon {
  std::map<std::string, bool> inventory;  // phoneme -> voiced
  std::map<std::string, std::vector<std::string>> words;
  int base_duration_frames = 8;
  double base_energy = 1.0;
  double pitch_start_hz = 220.0;
  double pitch_end_hz = 180.0;

  /// Inventory of single lower-case letters; vowels and voiced consonants
  /// are voiced.
  static TtsLexicon letters();

  /// Lexicon pronunciation, or one phoneme per inventory letter for OOV.
  std::vector<std::string> pronounce(std::string_view word) const;
};

/// Lines `word ph1 ph2 ...`; `%phone <symbol> <0|1>` extends the inventory.
TtsLexicon parse_tts_lexicon(std::string_view text);

struct TtsResult {
  AudioBuffer audio;
  dsp::MelSpectrogram mel;
  prosody::PhonemeProsody prosody;
  prosody::WordSpans spans;
  std::vector<std::string> words;
};

/// Base prosody from the lexicon and a falling pitch line, emphasis from the
/// SSML, then harmonic (voiced) or noise (unvoiced) synthesis per frame.
/// Audio length is (F-1)*hop + n_fft for F regulated frames, peak 0.9.
TtsResult toy_tts(std::string_view ssml_text, const TtsLexicon& lex,
                  const dsp::SpectrogramConfig& cfg, const prosody::EmphasisPolicy& policy,
                  std::uint64_t seed);

// ---------------------------------------------------------------------------

struct VcResult {
  AudioBuffer audio;
  dsp::MelSpectrogram mel;
};

/// Per-band mean of the log-mel frames.
std::vector<double> long_term_average_spectrum(const dsp::MelSpectrogram& mel);

/// Shifts the source mel by the LTAS difference to the target speaker and
/// vocodes with Griffin-Lim.
VcResult formant_shift_vc(const dsp::MelSpectrogram& src_mel, const AudioBuffer& target_sample,
                          const dsp::SpectrogramConfig& cfg, std::uint64_t seed,
                          int griffin_lim_iterations = 32);

// ---------------------------------------------------------------------------

/// Frame-synchronous RMS: for frame f at time f/fps, the RMS of the window
/// of round(sr/fps) samples centred on it. Samples outside the buffer count
/// as silence.
std::vector<double> frame_window_rms(const AudioBuffer& audio, Rational frame_rate,
                                     std::size_t first_frame, std::size_t count);

/// Full-frame boxes for every frame.
FaceTrack full_frame_track(const FrameSequence& frames, std::size_t first_frame = 0);

/// First row of the lower half of a box.
inline int lower_half_begin(const FaceBox& box) { return box.y + (box.h + 1) / 2; }

struct LipGeometry {
  double width_frac = 0.30;   // of box width
  double height_frac = 0.25;  // of box height, at aperture 1
  double center_y_frac = 0.75;
};

/// Draws a black mouth ellipse whose height follows audio energy.
/// `frames[i]` is absolute frame `first_frame + i`; `track` uses absolute
/// indices and `audio` starts at time 0. Apertures are RMS divided by
/// `normalizer`, or by the maximum RMS over these frames when absent, and
/// clamped to [0, 1].
FrameSequence energy_lipgen(const FrameSequence& frames, const FaceTrack& track,
                            const AudioBuffer& audio, std::size_t first_frame = 0,
                            std::optional<double> normalizer = std::nullopt,
                            const LipGeometry& geometry = {});

}  // namespace dub::stages
