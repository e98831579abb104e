// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "dub/dsp.hpp"
#include "dub/emphasis_align.hpp"
#include "dub/engine.hpp"
#include "dub/error.hpp"
#include "dub/metrics.hpp"
#include "dub/prosody.hpp"
#include "dub/sample.hpp"
#include "dub/ssml.hpp"
#include "dub/stages.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace dub;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

/// Collects failed checks of one criterion.
class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ = failed_ || !ok;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return !failed_; }
  std::string detail() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + std::string("failed: ") + f;
    return out;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

/// The single intermediate of a node with the given extension.
fs::path intermediate(const fs::path& out, const std::string& node, const std::string& ext) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(out / "intermediates" / node))
    if (e.path().extension() == ext) hits.push_back(e.path());
  if (hits.size() != 1)
    throw Error("expected one " + ext + " intermediate of " + node + ", found " + std::to_string(hits.size()));
  return hits.front();
}

engine::PipelineConfig reference_config() {
  return engine::load_pipeline_config(fs::path(DUB_REPO_DIR) / "configs" / "reference.json");
}

fs::path bundled_sample() { return fs::path(DUB_REPO_DIR) / "data" / "sample"; }

AudioBuffer mono(std::vector<double> x) { return AudioBuffer{16000, 1, std::move(x)}; }

// ---------------------------------------------------------------------------

void c1(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const dsp::SpectrogramConfig cfg;
  double worst_stft = 0, worst_mel = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = oracle::random_signal(rng, 2048, trial % 5 == 0 ? 1e-3 : 1.0);
    const auto s = dsp::stft(mono(x), cfg);
    const auto ref = oracle::naive_stft(x, cfg.n_fft, cfg.hop_length);
    c.require(s.frames == ref.size(), "stft frame count");
    for (std::size_t t = 0; t < std::min(s.frames, ref.size()); ++t) {
      double scale = 0;
      for (const auto& v : ref[t]) scale = std::max(scale, std::abs(v));
      for (std::size_t k = 0; k < s.bins; ++k)
        worst_stft = std::max(worst_stft, std::abs(s.at(t, k) - ref[t][k]) / scale);
    }
    const auto mel = dsp::mel_spectrogram(mono(x), cfg);
    const auto mref = oracle::log_mel(x, cfg.sample_rate, cfg.n_fft, cfg.hop_length, cfg.n_mels,
                                      cfg.f_min, cfg.f_max);
    for (std::size_t t = 0; t < mref.size(); ++t)
      for (std::size_t m = 0; m < mref[t].size(); ++m)
        worst_mel = std::max(worst_mel, std::abs(mel.frames(t, m) - mref[t][m]));
  }
  const double elapsed = seconds_since(t0);
  // a log-domain difference d is a relative mel-energy error of e^d - 1
  const double mel_rel = std::expm1(worst_mel);
  c.require(worst_stft <= 1e-6, "stft relative error " + fmt("%.3g", worst_stft));
  c.require(mel_rel <= 1e-6, "mel relative error " + fmt("%.3g", mel_rel));
  c.require(elapsed < 10.0, "runtime " + fmt("%.2f s", elapsed));
  c.note("50 signals, stft rel err " + fmt("%.2e", worst_stft) + ", mel rel err " + fmt("%.2e", mel_rel) +
         ", " + fmt("%.2f s", elapsed));
}

void c2(Check& c) {
  std::mt19937_64 rng(102);
  std::normal_distribution<double> n(0.0, 2.0);
  const std::size_t hs[] = {1, 2, 8};
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = hs[trial % 3], T = 1 + rng() % 12, S = 1 + rng() % 12;
    align::AttentionStack st;
    st.form = align::AttentionForm::kLogits;
    for (std::size_t k = 0; k < h; ++k) {
      dsp::Matrix m(T, S);
      for (auto& v : m.data) v = n(rng);
      st.heads.push_back(m);
    }
    const auto p = align::normalize_heads(st);
    const auto alpha = align::average_heads(p);
    std::vector<std::vector<double>> ref(T, std::vector<double>(S, 0.0));
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t j = 0; j < T; ++j) {
        const auto row = st.heads[k].row(j);
        const auto sm = oracle::softmax({row.begin(), row.end()});
        for (std::size_t i = 0; i < S; ++i) {
          worst = std::max(worst, std::abs(p.heads[k](j, i) - sm[i]));
          ref[j][i] += sm[i] / static_cast<double>(h);
        }
      }
    std::vector<std::vector<double>> got(T, std::vector<double>(S));
    for (std::size_t j = 0; j < T; ++j)
      for (std::size_t i = 0; i < S; ++i) {
        worst = std::max(worst, std::abs(alpha(j, i) - ref[j][i]));
        got[j][i] = alpha(j, i);
      }

    std::set<std::size_t> emph;
    for (std::size_t i = 0; i < S; ++i)
      if (rng() % 3 == 0) emph.insert(i);
    align::TokenAlignment al;
    al.alpha = alpha;
    const auto transferred = align::transfer_emphasis(al, emph);
    c.require(transferred == oracle::argmax_transfer(got, emph), "transfer vs argmax oracle");
    c.require(transferred.size() <= emph.size(), "transfer output size");

    auto perm = p;
    std::shuffle(perm.heads.begin(), perm.heads.end(), rng);
    const auto alpha_perm = align::average_heads(perm);
    c.require(alpha_perm.data == alpha.data, "head permutation changed alpha");
    align::TokenAlignment alp;
    alp.alpha = alpha_perm;
    c.require(align::transfer_emphasis(alp, emph) == transferred, "head permutation changed emphasis");

    auto shifted = st;
    for (auto& head : shifted.heads)
      for (std::size_t j = 0; j < T; ++j) {
        const double shift = n(rng) * 10.0;
        for (double& v : head.row(j)) v += shift;
      }
    align::TokenAlignment als;
    als.alpha = align::average_heads(align::normalize_heads(shifted));
    c.require(align::transfer_emphasis(als, emph) == transferred, "row shift changed emphasis");
  }
  c.require(worst <= 1e-12, "normalise/average vs oracle " + fmt("%.3g", worst));

  dsp::Matrix id(5, 5, 0.0);
  for (std::size_t i = 0; i < 5; ++i) id(i, i) = 1.0;
  align::TokenAlignment ida;
  ida.alpha = id;
  c.require(align::transfer_emphasis(ida, {2}) == std::set<std::size_t>{2}, "identity alignment");
  align::TokenAlignment tie;
  tie.alpha = dsp::Matrix(3, 2, 1.0 / 3.0);
  c.require(align::transfer_emphasis(tie, {1}) == std::set<std::size_t>{0}, "tie break");
  c.note("200 stacks, max oracle error " + fmt("%.2e", worst));
}

void c3(Check& c) {
  std::mt19937_64 rng(103);
  const std::string alphabet = "aBz09&<>\"'#;";
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> tokens(rng() % 9);
    for (auto& t : tokens) {
      const std::size_t len = 1 + rng() % 6;
      for (std::size_t i = 0; i < len; ++i) t += alphabet[rng() % alphabet.size()];
    }
    std::set<std::size_t> emph;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (rng() % 2 == 0) emph.insert(i);
    const auto level = static_cast<ssml::EmphasisLevel>(rng() % 3);
    const auto doc = ssml::parse(ssml::emit(tokens, emph, level));
    c.require(doc.words() == tokens && doc.emphasized(level) == emph && doc.emphasized() == emph,
              "round trip trial " + std::to_string(trial));
    ++checked;
  }
  bool rejected = false;
  try {
    ssml::parse("<speak><emphasis><emphasis>x</emphasis></emphasis></speak>");
  } catch (const FormatError&) {
    rejected = true;
  }
  c.require(rejected, "nested emphasis accepted");
  c.note(std::to_string(checked) + " round trips, nesting rejected");
}

void c4(Check& c) {
  using namespace prosody;
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> hz(90.0, 320.0), en(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    PhonemeProsody p;
    WordSpans spans;
    const std::size_t words = 1 + rng() % 6;
    for (std::size_t w = 0; w < words; ++w) {
      const std::size_t begin = p.phonemes.size();
      const std::size_t n = rng() % 5;
      for (std::size_t i = 0; i < n; ++i) {
        const bool voiced = rng() % 3 != 0;
        p.phonemes.push_back({"p" + std::to_string(i), voiced, static_cast<int>(rng() % 12),
                              voiced ? hz(rng) : 0.0, en(rng)});
      }
      spans.push_back({w, begin, p.phonemes.size()});
    }
    std::set<std::size_t> emph;
    for (std::size_t w = 0; w < words; ++w)
      if (rng() % 2) emph.insert(w);
    const auto out = apply_emphasis(p, spans, emph);
    bool local = true;
    int expected_total = 0;
    for (const auto& s : spans)
      for (std::size_t i = s.begin; i < s.end; ++i) {
        const int d = p.phonemes[i].duration_frames;
        if (!emph.count(s.word_index)) local = local && out.phonemes[i] == p.phonemes[i];
        expected_total += emph.count(s.word_index) ? static_cast<int>(std::floor(d * 1.25 + 0.5)) : d;
      }
    c.require(local, "locality");
    c.require(out.total_frames() >= p.total_frames(), "monotone duration");
    c.require(out.total_frames() == expected_total, "total duration after half-up rounding");

    const auto frames = length_regulate(p);
    c.require(static_cast<int>(frames.size()) == p.total_frames(), "length_regulate length");
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.phonemes.size(); ++i)
      for (int d = 0; d < p.phonemes[i].duration_frames; ++d, ++k)
        c.require(k < frames.size() && frames[k].symbol == p.phonemes[i].symbol &&
                      frames[k].phoneme_index == i,
                  "length_regulate order");
  }
  const auto up = apply_emphasis(PhonemeProsody{{{"a", true, 8, 200.0, 1.0}}}, {{0, 0, 1}}, {0});
  const double up_err = std::abs(up.phonemes[0].pitch_hz - 200.0 * std::pow(2.0, 2.0 / 12.0));
  c.require(up.phonemes[0].duration_frames == 10 && up.phonemes[0].energy == 1.5 && up_err <= 1e-9,
            "raise example");
  const auto down = apply_emphasis(PhonemeProsody{{{"a", true, 8, 150.0, 1.0}, {"o", true, 8, 250.0, 1.0}}},
                                   {{0, 0, 1}, {1, 1, 2}}, {0});
  const double down_err = std::abs(down.phonemes[0].pitch_hz - 150.0 * std::pow(2.0, -2.0 / 12.0));
  c.require(down_err <= 1e-9, "lower example");
  c.note("100 random tracks; pitch examples " + fmt("%.3f", up.phonemes[0].pitch_hz) + " Hz and " +
         fmt("%.3f", down.phonemes[0].pitch_hz) + " Hz");
}

void c5(Check& c) {
  const metrics::LossTerms t{0.7, 0.2, 0.4};
  const double v = metrics::combine_lipgen_loss(t);
  c.require(t.alpha == 1.0 && t.beta == 0.05, "default coefficients");
  // 0.7 + 0.2 + 0.05*0.4 in binary64 is the double just below 0.92; accept
  // the correctly computed double and nothing further away
  const double ulp = std::nextafter(0.92, 1.0) - 0.92;
  c.require(std::abs(v - 0.92) <= ulp, "value " + fmt("%.17g", v));
  c.note("L = " + fmt("%.17g", v) + " (" + (v == 0.92 ? "exactly 0.92" : "1 ulp from the literal 0.92") + ")");

  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const metrics::LossTerms a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    const double k = u(rng);
    const metrics::LossTerms sum{a.l_cgan + b.l_cgan, a.l_img + b.l_img, a.l_sync + b.l_sync};
    const metrics::LossTerms scaled{k * a.l_cgan, k * a.l_img, k * a.l_sync};
    const double la = metrics::combine_lipgen_loss(a), lb = metrics::combine_lipgen_loss(b);
    worst = std::max(worst, std::abs(metrics::combine_lipgen_loss(sum) - (la + lb)) / (la + lb));
    worst = std::max(worst, std::abs(metrics::combine_lipgen_loss(scaled) - k * la) / std::max(k * la, 1e-300));
    metrics::LossTerms z = a;
    z.beta = 0.0;
    const double base = metrics::combine_lipgen_loss(z);
    z.l_sync += 7.0;
    c.require(metrics::combine_lipgen_loss(z) == base, "beta = 0 ignores l_sync");
  }
  c.require(worst <= 1e-12, "linearity " + fmt("%.3g", worst));
  c.note("linearity over 100 triples, max rel err " + fmt("%.2e", worst));
}

void c6(Check& c) {
  std::mt19937_64 rng(106);
  static const char* vocab[] = {"a", "b", "c", "d"};
  auto words = [&](std::size_t lo) {
    oracle::Words w(lo + rng() % (9 - lo));
    for (auto& s : w) s = vocab[rng() % 4];
    return w;
  };
  for (int i = 0; i < 500; ++i) {
    const auto r = words(1), h = words(0);
    const double expect = static_cast<double>(oracle::edit_distance(r, h)) / r.size();
    c.require(std::abs(metrics::wer(r, h) - expect) <= 1e-9, "wer vs oracle");
  }
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t T = 5 + rng() % 36, dim = 1 + rng() % 3;
    const int off = static_cast<int>(rng() % 6);
    if (T <= static_cast<std::size_t>(2 * off)) continue;
    std::vector<std::vector<double>> v(T, std::vector<double>(dim)), a = v;
    metrics::EmbeddingSequence ev{dim, dsp::Matrix(T, dim)}, ea{dim, dsp::Matrix(T, dim)};
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < dim; ++d) {
        ev.vectors(t, d) = v[t][d] = n(rng);
        ea.vectors(t, d) = a[t][d] = n(rng);
      }
    const auto got = metrics::lse(ev, ea, off);
    const auto ref = oracle::lse(v, a, off);
    worst = std::max({worst, std::abs(got.lse_d - ref.d), std::abs(got.lse_c - ref.c)});
    c.require(got.frame_offsets == ref.argmin, "lse per-frame offsets");
  }
  c.require(worst <= 1e-9, "lse vs oracle " + fmt("%.3g", worst));

  const std::vector<oracle::Words> refs{{"das", "alte", "Haus", "steht", "hier"}, {"ein", "Hund", "rennt", "weg", "jetzt"}};
  c.require(metrics::bleu(refs, refs) == 1.0, "bleu perfect match");
  c.require(metrics::bleu({{"a", "b", "c"}}, {{"a", "b", "c"}}) == 0.0, "bleu without 4-grams");

  double fid_self = 0, fid_err = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t na = 2 + rng() % 60, nb = 2 + rng() % 60;
    std::normal_distribution<double> ga(n(rng), 0.2 + std::abs(n(rng))), gb(n(rng), 0.2 + std::abs(n(rng)));
    std::vector<double> xa(na), xb(nb);
    metrics::EmbeddingSequence ea{1, dsp::Matrix(na, 1)}, eb{1, dsp::Matrix(nb, 1)};
    for (std::size_t k = 0; k < na; ++k) ea.vectors(k, 0) = xa[k] = ga(rng);
    for (std::size_t k = 0; k < nb; ++k) eb.vectors(k, 0) = xb[k] = gb(rng);
    fid_self = std::max(fid_self, metrics::fid(ea, ea));
    fid_err = std::max(fid_err, std::abs(metrics::fid(ea, eb) - oracle::fid_1d(xa, xb)));
    const std::size_t dim = 1 + rng() % 4;
    metrics::EmbeddingSequence em{dim, dsp::Matrix(30, dim)};
    for (auto& val : em.vectors.data) val = n(rng);
    fid_self = std::max(fid_self, metrics::fid(em, em));
  }
  c.require(fid_self <= 1e-6, "fid(a,a) " + fmt("%.3g", fid_self));
  c.require(fid_err <= 1e-6, "fid 1-D closed form " + fmt("%.3g", fid_err));
  c.note("wer 500 pairs; lse max err " + fmt("%.2e", worst) + "; fid(a,a) max " + fmt("%.2e", fid_self) +
         ", 1-D err " + fmt("%.2e", fid_err));
}

// ---------------------------------------------------------------------------

struct RunOutcome {
  engine::RunReport report;
  double seconds = 0;
};

RunOutcome run(engine::PipelineConfig cfg, const fs::path& input, const fs::path& out) {
  const auto t0 = Clock::now();
  auto p = engine::build_pipeline(cfg);
  RunOutcome r;
  r.report = p.run(read_manifest(input), out);
  r.seconds = seconds_since(t0);
  return r;
}

void c7(Check& c, const fs::path& work) {
  const auto t0 = Clock::now();
  auto cfg = reference_config();
  cfg.seed = 0;
  const auto a = run(cfg, bundled_sample(), work / "c7a");
  const auto b = run(cfg, bundled_sample(), work / "c7b");
  c.require(a.report.ok(), "run 1: " + a.report.error);
  c.require(b.report.ok(), "run 2: " + b.report.error);
  const auto ta = tree(work / "c7a");
  c.require(ta == tree(work / "c7b"), "two runs differ");
  for (std::size_t cap : {std::size_t{1}, std::size_t{64}}) {
    auto cc = cfg;
    cc.channel_capacity = cap;
    const auto out = work / ("c7cap" + std::to_string(cap));
    const auto r = run(cc, bundled_sample(), out);
    c.require(r.report.ok(), "capacity run: " + r.report.error);
    c.require(tree(out) == ta, "capacity " + std::to_string(cap) + " differs");
  }
  const auto frames = read_frame_seq(bundled_sample() / "frames");
  c.require(frames.frames.size() == 75, "sample frame count");
  const double worst = std::max(a.seconds, b.seconds);
  c.require(worst < 60.0, "wall time " + fmt("%.2f s", worst));
  c.note(std::to_string(ta.size()) + " files identical across 2 runs and capacities 1/64; run wall " +
         fmt("%.2f s", worst) + ", total " + fmt("%.2f s", seconds_since(t0)));
}

void c8(Check& c, const fs::path& work) {
  const fs::path emph_dir = work / "c7a";
  if (!fs::exists(emph_dir / "outputs.json")) {
    c.require(false, "needs the criterion 7 output");
    return;
  }
  auto cfg = reference_config();
  for (auto& s : cfg.stages)
    if (s.type == "stub_asr") s.params["z_threshold"] = 100.0;
  const auto plain = run(cfg, bundled_sample(), work / "c8plain");
  c.require(plain.report.ok(), "plain run: " + plain.report.error);
  if (!plain.report.ok()) return;

  const auto asr = stages::parse_transcript(read_text_file(intermediate(emph_dir, "asr", ".transcript")));
  c.require(asr.emphasized() == std::set<std::size_t>{2}, "asr did not flag exactly the loud word");
  const auto attn = align::parse_attention(read_text_file(intermediate(emph_dir, "mt", ".attn")));
  bool identity = attn.head_count() == 8;
  for (const auto& h : attn.heads)
    for (std::size_t j = 0; j < h.rows; ++j)
      for (std::size_t i = 0; i < h.cols; ++i) identity = identity && h(j, i) == (i == j ? 1.0 : 0.0);
  c.require(identity, "mt attention is not 8 identity heads");
  const auto ssml_text = read_text_file(intermediate(emph_dir, "mt", ".ssml"));
  const auto doc = ssml::parse(ssml_text);
  c.require(doc.emphasized() == std::set<std::size_t>{2}, "ssml emphasis");
  c.require(read_text_file(emph_dir / "translation.ssml").find("<emphasis level=\"strong\">Haus</emphasis>") !=
                std::string::npos,
            "translation.ssml");

  const auto lex = stages::parse_tts_lexicon(read_text_file(bundled_sample() / "tts_lexicon.txt"));
  std::size_t begin = 0;
  const auto words = doc.words();
  for (std::size_t w = 0; w < 2; ++w) begin += lex.pronounce(words[w]).size();
  const std::size_t end = begin + lex.pronounce(words[2]).size();
  const auto pe = prosody::parse_prosody(read_text_file(intermediate(emph_dir, "tts", ".prosody")));
  const auto pp = prosody::parse_prosody(read_text_file(intermediate(work / "c8plain", "tts", ".prosody")));
  int de = 0, dp = 0;
  for (std::size_t i = begin; i < end && i < pe.phonemes.size() && i < pp.phonemes.size(); ++i) {
    de += pe.phonemes[i].duration_frames;
    dp += pp.phonemes[i].duration_frames;
  }
  const double ratio = dp > 0 ? static_cast<double>(de) / dp : 0.0;
  c.require(dp > 0 && ratio >= 1.25, "duration ratio " + fmt("%.3f", ratio));
  bool others_equal = pe.phonemes.size() == pp.phonemes.size();
  for (std::size_t i = 0; others_equal && i < pe.phonemes.size(); ++i)
    if (i < begin || i >= end) others_equal = pe.phonemes[i] == pp.phonemes[i];
  c.require(others_equal, "phonemes outside the emphasised word changed");
  c.note("'" + words[2] + "' " + std::to_string(de) + " vs " + std::to_string(dp) + " frames (x" +
         fmt("%.3f", ratio) + ")");
}

void c9(Check& c, const fs::path& work) {
  const fs::path out = work / "c7a";
  if (!fs::exists(out / "outputs.json")) {
    c.require(false, "needs the criterion 7 output");
    return;
  }
  const auto in = read_frame_seq(bundled_sample() / "frames");
  const auto res = read_frame_seq(out / "frames");
  const auto track = read_face_track(bundled_sample() / "face_track.jsonl", &in);
  c.require(in.frames.size() == res.frames.size(), "frame count");
  std::size_t violations = 0, modified = 0;
  for (std::size_t f = 0; f < std::min(in.frames.size(), res.frames.size()); ++f) {
    const FaceBox* box = track.find(f);
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        const bool same = std::equal(in.frames[f].pixel(x, y), in.frames[f].pixel(x, y) + 3,
                                     res.frames[f].pixel(x, y));
        const bool lower = box && x >= box->x && x < box->x + box->w && y >= stages::lower_half_begin(*box) &&
                           y < box->y + box->h;
        if (!same && !lower) ++violations;
        if (!same) ++modified;
      }
  }
  c.require(violations == 0, std::to_string(violations) + " pixels changed outside the lower half");
  c.require(modified > 0, "no pixel was modified");

  const auto audio = read_wav(out / "audio.wav");
  const auto emb = metrics::reference_embedders(audio, res, track);
  const auto l = metrics::lse(emb.video, emb.audio);
  c.require(l.offset == 0, "lse offset " + std::to_string(l.offset));
  c.require(l.lse_d < 0.05, "lse_d " + fmt("%.4f", l.lse_d));
  c.note("0 masked-region violations, " + std::to_string(modified) + " pixels modified; lse_d " +
         fmt("%.4f", l.lse_d) + ", lse_c " + fmt("%.4f", l.lse_c) + ", offset " + std::to_string(l.offset));
}

void c10(Check& c, const fs::path& work) {
  SampleSpec spec;
  spec.seconds = 10.0;
  write_sample(work / "c10in", spec);
  auto cfg = reference_config();
  cfg.chunk_seconds = 1.0;
  cfg.realtime = true;
  const auto r = run(cfg, work / "c10in", work / "c10out");
  c.require(r.report.ok(), "run: " + r.report.error);
  const auto* lip = r.report.stage("lipgen");
  c.require(lip && lip->first_output_latency_s, "no lipgen latency reported");
  if (!lip || !lip->first_output_latency_s) return;
  const double lat = *lip->first_output_latency_s;
  c.require(lat < 10.0 && lat < r.report.input_duration_s, "latency " + fmt("%.3f s", lat));
  c.note("input " + fmt("%.1f s", r.report.input_duration_s) + ", lipgen first output after " + fmt("%.3f s", lat) +
         ", run wall " + fmt("%.2f s", r.report.wall_time_s));
}

class Sink : public engine::Emitter {
 public:
  void emit(ContentType, Payload payload, double, double) override {
    std::lock_guard lock(mu);
    texts.push_back(std::get<std::string>(payload));
  }
  std::mutex mu;
  std::vector<std::string> texts;
};

StageMessage text_msg(std::uint64_t seq, MessageKind kind, std::string text = {}) {
  StageMessage m;
  m.stream_id = "input0.text";
  m.seq = seq;
  m.kind = kind;
  m.content_type = ContentType::kText;
  if (kind == MessageKind::kData) m.payload = std::make_shared<const Payload>(std::move(text));
  return m;
}

void c11(Check& c) {
  using namespace std::chrono_literals;
  auto echo = engine::make_external_stage("echo", {DUB_ECHO_STAGE}, 60s, 5s);
  const auto d = echo->descriptor();
  c.require(d.accepts == std::vector<ContentType>{ContentType::kText} &&
                d.produces == std::vector<ContentType>{ContentType::kText},
            "echo descriptor");
  Sink sink;
  echo->begin(sink);
  for (int i = 0; i < 100; ++i) echo->process(text_msg(i, MessageKind::kData, "m" + std::to_string(i)), Port::kMain, sink);
  echo->end_of_stream(text_msg(100, MessageKind::kEnd), Port::kMain, sink);
  echo->finish(sink);
  bool ordered = sink.texts.size() == 100;
  for (std::size_t i = 0; ordered && i < 100; ++i) ordered = sink.texts[i] == "m" + std::to_string(i);
  c.require(ordered, "echo round trip of 100 messages");

  const auto watchdog = 5s;
  auto crash = engine::make_external_stage("crash", {DUB_CRASH_STAGE}, watchdog, 5s);
  Sink sink2;
  crash->begin(sink2);
  const auto t0 = Clock::now();
  std::string error;
  try {
    for (int i = 0; i < 1000; ++i) {
      crash->process(text_msg(i, MessageKind::kData, "x"), Port::kMain, sink2);
      std::this_thread::sleep_for(2ms);
    }
    crash->end_of_stream(text_msg(1000, MessageKind::kEnd), Port::kMain, sink2);
    crash->finish(sink2);
  } catch (const ProtocolError& e) {
    error = e.what();
  } catch (const std::exception& e) {
    c.require(false, std::string("untyped error: ") + e.what());
  }
  const double elapsed = seconds_since(t0);
  c.require(!error.empty(), "crash produced no ProtocolError");
  c.require(elapsed < std::chrono::duration<double>(watchdog).count(), "crash took " + fmt("%.2f s", elapsed));
  c.note("100 echoed in order; crash -> ProtocolError after " + fmt("%.3f s", elapsed) + " (\"" + error + "\")");
}

}  // namespace

int main() {
  testutil::TempDir work("acceptance");
  struct Criterion {
    int id;
    const char* title;
    std::function<void(Check&)> fn;
  };
  const std::vector<Criterion> all{
      {1, "DSP oracle equivalence", c1},
      {2, "attention normalise/average/transfer", c2},
      {3, "SSML round trip", c3},
      {4, "prosody policy", c4},
      {5, "composite lip-gen loss", c5},
      {6, "metrics vs oracles", c6},
      {7, "end-to-end determinism", [&](Check& c) { c7(c, work.path()); }},
      {8, "emphasis survives the cascade", [&](Check& c) { c8(c, work.path()); }},
      {9, "lip-gen masking and sync", [&](Check& c) { c9(c, work.path()); }},
      {10, "streaming latency", [&](Check& c) { c10(c, work.path()); }},
      {11, "external-stage protocol", c11},
  };
  int failed = 0;
  for (const auto& cr : all) {
    Check c;
    try {
      cr.fn(c);
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    if (!c.ok()) ++failed;
    std::printf("criterion %2d: %s  %s (%s)\n", cr.id, c.ok() ? "PASS" : "FAIL", cr.title, c.detail().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
