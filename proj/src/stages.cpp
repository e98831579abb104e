#include "dub/stages.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "dub/error.hpp"

namespace dub::stages {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool blank(std::string_view line) { return line.find_first_not_of(" \t\r") == std::string_view::npos; }

}  // namespace

std::vector<std::string> EmphasisTranscript::texts() const {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.text);
  return out;
}

std::set<std::size_t> EmphasisTranscript::emphasized() const {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i].emphasized) out.insert(i);
  return out;
}

void EmphasisTranscript::validate() const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w.text.empty() || std::any_of(w.text.begin(), w.text.end(), [](char c) {
          return std::isspace(static_cast<unsigned char>(c));
        }))
      throw InvalidArgument("transcript: word " + std::to_string(i) + " is empty or has whitespace");
    if (!(w.start_s >= 0.0 && w.start_s < w.end_s))
      throw InvalidArgument("transcript: word '" + w.text + "' needs 0 <= start < end");
    if (i > 0 && w.start_s < words[i - 1].end_s)
      throw InvalidArgument("transcript: word '" + w.text + "' overlaps its predecessor");
  }
}

std::string format_transcript(const EmphasisTranscript& t) {
  std::string out = "transcript v1 " + t.language + " " + std::to_string(t.words.size()) + "\n";
  char line[96];
  for (const auto& w : t.words) {
    std::snprintf(line, sizeof line, "%.17g %.17g %d ", w.start_s, w.end_s, w.emphasized ? 1 : 0);
    out += line;
    out += w.text;
    out += '\n';
  }
  return out;
}

EmphasisTranscript parse_transcript(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, version;
  std::size_t n = 0;
  EmphasisTranscript t;
  if (!(in >> magic >> version >> t.language >> n) || magic != "transcript" || version != "v1")
    throw FormatError("transcript: malformed header");
  for (std::size_t i = 0; i < n; ++i) {
    Word w;
    int flag = 0;
    if (!(in >> w.start_s >> w.end_s >> flag >> w.text) || (flag != 0 && flag != 1))
      throw FormatError("transcript: malformed word record " + std::to_string(i));
    w.emphasized = flag == 1;
    t.words.push_back(std::move(w));
  }
  std::string extra;
  if (in >> extra) throw FormatError("transcript: trailing data");
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return t;
}

std::vector<EmphasisTranscript> parse_sidecar(std::string_view text, std::string language) {
  std::vector<EmphasisTranscript> utterances;
  EmphasisTranscript current;
  current.language = language;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (current.words.empty()) return;
    current.validate();
    if (!utterances.empty() && current.words.front().start_s < utterances.back().words.back().end_s)
      throw FormatError("sidecar: utterances overlap at line " + std::to_string(line_no));
    utterances.push_back(std::move(current));
    current = EmphasisTranscript{};
    current.language = language;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) {
      flush();
      continue;
    }
    if (line.find_first_not_of(" \t") != std::string::npos && line[line.find_first_not_of(" \t")] == '#')
      continue;
    std::istringstream fields(line);
    Word w;
    std::string extra;
    if (!(fields >> w.start_s >> w.end_s >> w.text) || (fields >> extra))
      throw FormatError("sidecar line " + std::to_string(line_no) + ": expected '<start> <end> <word>'");
    current.words.push_back(std::move(w));
  }
  try {
    flush();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("sidecar: ") + e.what());
  }
  return utterances;
}

// ---------------------------------------------------------------------------

EmphasisTranscript stub_asr(const AudioBuffer& audio, const EmphasisTranscript& words,
                            const AsrConfig& cfg) {
  audio.validate();
  if (!audio.is_mono()) throw InvalidArgument("stub_asr: audio must be mono");
  words.validate();
  EmphasisTranscript out = words;
  const std::size_t n = words.words.size();
  if (n == 0) return out;

  std::vector<double> rms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = words.words[i];
    const auto s = static_cast<std::size_t>(std::llround(w.start_s * audio.sample_rate));
    const auto e = static_cast<std::size_t>(std::llround(w.end_s * audio.sample_rate));
    if (e > audio.samples.size())
      throw InvalidArgument("stub_asr: word '" + w.text + "' extends past the end of the audio");
    double acc = 0.0;
    for (std::size_t k = s; k < e; ++k) acc += audio.samples[k] * audio.samples[k];
    rms[i] = e > s ? std::sqrt(acc / static_cast<double>(e - s)) : 0.0;
  }
  double mean = 0.0;
  for (double r : rms) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rms) var += (r - mean) * (r - mean);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    out.words[i].emphasized = sigma >= 1e-9 && (rms[i] - mean) / sigma > cfg.z_threshold;
  return out;
}

// ---------------------------------------------------------------------------

void LexiconMtConfig::add(std::string_view source, std::string_view target) {
  entries.emplace(lower(source), std::string(target));
}

std::string LexiconMtConfig::translate(std::string_view word) const {
  auto it = entries.find(lower(word));
  return it == entries.end() ? std::string(word) : it->second;
}

LexiconMtConfig parse_mt_lexicon(std::string_view text) {
  LexiconMtConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line) || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream fields(line);
    std::string src, tgt, extra;
    if (!(fields >> src >> tgt) || (fields >> extra))
      throw FormatError("mt lexicon line " + std::to_string(line_no) + ": expected '<source> <target>'");
    cfg.add(src, tgt);
  }
  return cfg;
}

MtResult lexicon_mt(const EmphasisTranscript& src, const LexiconMtConfig& cfg) {
  if (cfg.heads <= 0) throw InvalidArgument("lexicon_mt: heads must be positive");
  MtResult out;
  const std::size_t n = src.words.size();
  for (const auto& w : src.words) out.target_words.push_back(cfg.translate(w.text));

  dsp::Matrix one_hot(n, n);
  for (std::size_t i = 0; i < n; ++i) one_hot(i, i) = 1.0;
  out.attention.form = align::AttentionForm::kProbabilities;
  out.attention.model_dim = cfg.model_dim;
  out.attention.heads.assign(static_cast<std::size_t>(cfg.heads), one_hot);

  if (n > 0) {
    align::TokenAlignment alignment;
    alignment.alpha = align::average_heads(align::normalize_heads(out.attention));
    alignment.source_tokens = src.texts();
    alignment.target_tokens = out.target_words;
    out.emphasized_target = align::transfer_emphasis(alignment, src.emphasized());
  }
  out.ssml = ssml::emit(out.target_words, out.emphasized_target);
  return out;
}

// ---------------------------------------------------------------------------

TtsLexicon TtsLexicon::letters() {
  TtsLexicon lex;
  const std::string voiced = "aeiouybdgjlmnrvwz";
  for (char c = 'a'; c <= 'z'; ++c) lex.inventory[std::string(1, c)] = voiced.find(c) != std::string::npos;
  return lex;
}

std::vector<std::string> TtsLexicon::pronounce(std::string_view word) const {
  const std::string key = lower(word);
  if (auto it = words.find(key); it != words.end()) return it->second;
  std::vector<std::string> out;
  for (char c : key) {
    std::string sym(1, c);
    if (inventory.contains(sym)) out.push_back(std::move(sym));
  }
  return out;
}

TtsLexicon parse_tts_lexicon(std::string_view text) {
  TtsLexicon lex = TtsLexicon::letters();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, std::string>> pending_words;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line) || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head == "%phone") {
      std::string sym, extra;
      int voiced = -1;
      if (!(fields >> sym >> voiced) || (voiced != 0 && voiced != 1) || (fields >> extra))
        throw FormatError("tts lexicon line " + std::to_string(line_no) + ": expected '%phone <symbol> <0|1>'");
      lex.inventory[sym] = voiced == 1;
      continue;
    }
    std::vector<std::string> phones;
    for (std::string p; fields >> p;) phones.push_back(p);
    if (phones.empty())
      throw FormatError("tts lexicon line " + std::to_string(line_no) + ": word without phonemes");
    const std::string key = lower(head);
    if (!lex.words.contains(key)) {
      lex.words.emplace(key, std::move(phones));
      pending_words.emplace_back(line_no, key);
    }
  }
  for (const auto& [no, key] : pending_words)
    for (const auto& p : lex.words.at(key))
      if (!lex.inventory.contains(p))
        throw FormatError("tts lexicon line " + std::to_string(no) + ": phoneme '" + p +
                          "' is not in the inventory");
  return lex;
}

TtsResult toy_tts(std::string_view ssml_text, const TtsLexicon& lex,
                  const dsp::SpectrogramConfig& cfg, const prosody::EmphasisPolicy& policy,
                  std::uint64_t seed) {
  cfg.validate();
  const ssml::Document doc = ssml::parse(ssml_text);
  TtsResult out;
  out.words = doc.words();
  std::set<std::size_t> emphasized = doc.emphasized(ssml::EmphasisLevel::kStrong);
  emphasized.merge(doc.emphasized(ssml::EmphasisLevel::kModerate));

  prosody::PhonemeProsody base;
  for (std::size_t w = 0; w < out.words.size(); ++w) {
    const std::size_t begin = base.phonemes.size();
    for (const auto& sym : lex.pronounce(out.words[w])) {
      prosody::Phoneme ph;
      ph.symbol = sym;
      ph.voiced = lex.inventory.at(sym);
      ph.duration_frames = lex.base_duration_frames;
      ph.energy = lex.base_energy;
      base.phonemes.push_back(std::move(ph));
    }
    out.spans.push_back({w, begin, base.phonemes.size()});
  }
  const auto voiced_count = static_cast<std::size_t>(
      std::count_if(base.phonemes.begin(), base.phonemes.end(), [](const auto& p) { return p.voiced; }));
  std::size_t v = 0;
  for (auto& ph : base.phonemes) {
    if (!ph.voiced) continue;
    const double frac = voiced_count > 1 ? static_cast<double>(v) / static_cast<double>(voiced_count - 1) : 0.0;
    ph.pitch_hz = lex.pitch_start_hz + (lex.pitch_end_hz - lex.pitch_start_hz) * frac;
    ++v;
  }
  out.prosody = prosody::apply_emphasis(base, out.spans, emphasized, policy);

  const auto frames = prosody::length_regulate(out.prosody);
  out.audio = AudioBuffer{cfg.sample_rate, 1, {}};
  out.mel.sample_rate = cfg.sample_rate;
  out.mel.n_fft = cfg.n_fft;
  out.mel.hop_length = cfg.hop_length;
  out.mel.n_mels = cfg.n_mels;
  out.mel.frames = dsp::Matrix(0, static_cast<std::size_t>(cfg.n_mels));
  if (frames.empty()) return out;

  const auto hop = static_cast<std::size_t>(cfg.hop_length);
  const std::size_t n = (frames.size() - 1) * hop + static_cast<std::size_t>(cfg.n_fft);
  auto& y = out.audio.samples;
  y.resize(n);
  std::mt19937_64 rng(seed);
  double phase = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = frames[std::min(i / hop, frames.size() - 1)];
    if (f.voiced) {
      phase = std::fmod(phase + two_pi * f.pitch_hz / cfg.sample_rate, two_pi);
      y[i] = f.energy * (0.6 * std::sin(phase) + 0.25 * std::sin(2.0 * phase) +
                         0.15 * std::sin(3.0 * phase));
    } else {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      y[i] = 0.3 * f.energy * (2.0 * u - 1.0);
    }
  }
  double peak = 0.0;
  for (double s : y) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : y) s *= 0.9 / peak;
  out.mel = dsp::mel_spectrogram(out.audio, cfg);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> long_term_average_spectrum(const dsp::MelSpectrogram& mel) {
  std::vector<double> ltas(mel.frames.cols, 0.0);
  if (mel.frames.rows == 0) return ltas;
  for (std::size_t t = 0; t < mel.frames.rows; ++t)
    for (std::size_t m = 0; m < mel.frames.cols; ++m) ltas[m] += mel.frames(t, m);
  for (double& v : ltas) v /= static_cast<double>(mel.frames.rows);
  return ltas;
}

VcResult formant_shift_vc(const dsp::MelSpectrogram& src_mel, const AudioBuffer& target_sample,
                          const dsp::SpectrogramConfig& cfg, std::uint64_t seed,
                          int griffin_lim_iterations) {
  cfg.validate();
  if (!src_mel.geometry_matches(cfg)) throw InvalidArgument("vc: source mel geometry mismatch");
  if (target_sample.sample_rate != cfg.sample_rate)
    throw InvalidArgument("vc: target sample rate differs from the pipeline rate");
  if (target_sample.frame_count() < static_cast<std::size_t>(cfg.n_fft))
    throw InvalidArgument("vc: target sample shorter than n_fft");

  VcResult out;
  out.mel = src_mel;
  if (src_mel.frames.rows > 0) {
    const auto target = long_term_average_spectrum(dsp::mel_spectrogram(target_sample, cfg));
    const auto source = long_term_average_spectrum(src_mel);
    const double floor = std::log(dsp::kMelFloor);
    for (std::size_t t = 0; t < out.mel.frames.rows; ++t)
      for (std::size_t m = 0; m < out.mel.frames.cols; ++m)
        out.mel.frames(t, m) = std::max(src_mel.frames(t, m) + (target[m] - source[m]), floor);
  }
  out.audio = dsp::griffin_lim(out.mel, cfg, griffin_lim_iterations, seed);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> frame_window_rms(const AudioBuffer& audio, Rational frame_rate,
                                     std::size_t first_frame, std::size_t count) {
  if (!audio.is_mono()) throw InvalidArgument("frame_window_rms: audio must be mono");
  if (frame_rate.num <= 0 || frame_rate.den <= 0)
    throw InvalidArgument("frame_window_rms: invalid frame rate");
  const std::int64_t sr = audio.sample_rate;
  const std::int64_t num = frame_rate.num;
  const std::int64_t den = frame_rate.den;
  const std::int64_t len = std::max<std::int64_t>(1, (2 * sr * den + num) / (2 * num));
  const auto n = static_cast<std::int64_t>(audio.samples.size());

  std::vector<double> out(count);
  const auto total = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < total; ++i) {
    const auto f = static_cast<std::int64_t>(first_frame) + i;
    // floor((f*den*sr - len*num/2) / num) with exact integers
    const std::int64_t numer = 2 * f * den * sr - len * num;
    const std::int64_t denom = 2 * num;
    std::int64_t start = numer / denom;
    if (numer % denom != 0 && numer < 0) --start;
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(start, 0); k < std::min(start + len, n); ++k)
      acc += audio.samples[static_cast<std::size_t>(k)] * audio.samples[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = std::sqrt(acc / static_cast<double>(len));
  }
  return out;
}

FaceTrack full_frame_track(const FrameSequence& frames, std::size_t first_frame) {
  FaceTrack track;
  for (std::size_t i = 0; i < frames.frames.size(); ++i)
    track.entries.push_back({first_frame + i, 0, 0, frames.width, frames.height});
  return track;
}

FrameSequence energy_lipgen(const FrameSequence& frames, const FaceTrack& track,
                            const AudioBuffer& audio, std::size_t first_frame,
                            std::optional<double> normalizer, const LipGeometry& geometry) {
  frames.validate();
  audio.validate();
  const auto rms = frame_window_rms(audio, frames.frame_rate, first_frame, frames.frames.size());
  const double norm = normalizer ? *normalizer
                                 : (rms.empty() ? 0.0 : *std::max_element(rms.begin(), rms.end()));

  FrameSequence out = frames;
  const auto count = static_cast<long>(frames.frames.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const FaceBox* box = track.find(first_frame + idx);
    if (box == nullptr || norm < 1e-9) continue;
    const double aperture = std::clamp(rms[idx] / norm, 0.0, 1.0);
    if (aperture <= 0.0) continue;
    Image& img = out.frames[idx];
    const double cx = box->x + box->w / 2.0;
    const double cy = box->y + geometry.center_y_frac * box->h;
    const double rx = geometry.width_frac * box->w / 2.0;
    const double ry = aperture * geometry.height_frac * box->h / 2.0;
    const int y0 = std::max(lower_half_begin(*box), static_cast<int>(std::floor(cy - ry)));
    const int y1 = std::min(box->y + box->h, static_cast<int>(std::ceil(cy + ry)) + 1);
    const int x0 = std::max(box->x, static_cast<int>(std::floor(cx - rx)));
    const int x1 = std::min(box->x + box->w, static_cast<int>(std::ceil(cx + rx)) + 1);
    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const double dx = (px + 0.5 - cx) / rx;
        const double dy = (py + 0.5 - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) {
          std::uint8_t* p = img.pixel(px, py);
          p[0] = p[1] = p[2] = 0;
        }
      }
    }
  }
  return out;
}

}  // namespace dub::stages
