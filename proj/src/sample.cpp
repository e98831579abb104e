#include "dub/sample.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include <json.hpp>

#include "dub/error.hpp"
#include "dub/media_io.hpp"

namespace dub {

namespace {

namespace fs = std::filesystem;

struct Sentence {
  const char* en[4];
  const char* de[4];
};

constexpr Sentence kSentences[] = {
    {{"the", "old", "house", "stands"}, {"das", "alte", "Haus", "steht"}},
    {{"a", "small", "dog", "runs"}, {"ein", "kleiner", "Hund", "rennt"}},
    {{"my", "green", "car", "waits"}, {"mein", "gruenes", "Auto", "wartet"}},
    {{"this", "big", "tree", "grows"}, {"der", "grosse", "Baum", "waechst"}},
};

constexpr const char* kTtsLexicon =
    "# pronunciations; unlisted words fall back to letters\n"
    "%phone au 1\n"
    "%phone ei 1\n"
    "%phone sh 0\n"
    "%phone ch 0\n"
    "das d a s\n"
    "alte a l t e\n"
    "haus h au s\n"
    "steht sh t e t\n"
    "ein ei n\n"
    "kleiner k l ei n e r\n"
    "hund h u n t\n"
    "rennt r e n t\n"
    "auto au t o\n"
    "waechst v e k s t\n"
    "baum b au m\n";

constexpr double kLead = 0.3;
constexpr double kWord = 0.4;
constexpr double kGap = 0.1;
constexpr double kPause = 0.5;
constexpr int kLoudWord = 2;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void write_sample(const fs::path& dir, const SampleSpec& spec) {
  if (!(spec.seconds > 0.0) || spec.sample_rate <= 0 || spec.fps <= 0 || spec.width < 16 ||
      spec.height < 16)
    throw InvalidArgument("sample: invalid spec");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("sample: cannot create " + dir.string() + ": " + ec.message());

  const auto n = static_cast<std::size_t>(std::llround(spec.seconds * spec.sample_rate));
  AudioBuffer audio{spec.sample_rate, 1, std::vector<double>(n, 0.0)};
  std::string sidecar = "# start end word\n";
  std::string mt;
  const double utterance_len = 4 * kWord + 3 * kGap;
  double t = kLead;
  std::size_t u = 0;
  for (; t + utterance_len <= spec.seconds; ++u, t += utterance_len + kPause) {
    const Sentence& s = kSentences[u % std::size(kSentences)];
    if (u > 0) sidecar += "\n";
    for (int w = 0; w < 4; ++w) {
      const double start = t + w * (kWord + kGap);
      const double end = start + kWord;
      sidecar += num(start) + " " + num(end) + " " + s.en[w] + "\n";
      const double amp = w == kLoudWord ? 0.6 : 0.2;
      const double f0 = 140.0 + 30.0 * w;
      const auto a = static_cast<std::size_t>(std::llround(start * spec.sample_rate));
      const auto b = static_cast<std::size_t>(std::llround(end * spec.sample_rate));
      const double ramp = 0.01 * spec.sample_rate;
      for (std::size_t k = a; k < b && k < n; ++k) {
        const double x = static_cast<double>(k - a);
        const double env = std::min({1.0, x / ramp, static_cast<double>(b - k) / ramp});
        const double ph = 2.0 * std::numbers::pi * f0 * x / spec.sample_rate;
        audio.samples[k] = amp * env * (0.7 * std::sin(ph) + 0.3 * std::sin(2.0 * ph));
      }
    }
  }
  for (const auto& s : kSentences)
    for (int w = 0; w < 4; ++w) mt += std::string(s.en[w]) + " " + s.de[w] + "\n";
  write_wav(audio, dir / "audio.wav");

  const auto frame_count = static_cast<std::size_t>(std::llround(spec.seconds * spec.fps));
  FrameSequence frames{spec.width, spec.height, Rational{spec.fps, 1}, {}};
  FaceTrack track;
  std::mt19937_64 rng(spec.seed);
  const int bw = spec.width * 2 / 3, bh = spec.height * 5 / 6;
  for (std::size_t f = 0; f < frame_count; ++f) {
    Image img(spec.width, spec.height);
    const int dx = static_cast<int>(f % 5) - 2;
    const int bx = (spec.width - bw) / 2 + dx, by = (spec.height - bh) / 2;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        std::uint8_t* p = img.pixel(x, y);
        const bool face = x >= bx && x < bx + bw && y >= by && y < by + bh;
        const auto jitter = static_cast<int>(rng() % 9);
        if (face) {
          p[0] = static_cast<std::uint8_t>(196 + jitter);
          p[1] = static_cast<std::uint8_t>(150 + jitter);
          p[2] = static_cast<std::uint8_t>(120 + jitter);
        } else {
          p[0] = static_cast<std::uint8_t>(40 + x);
          p[1] = static_cast<std::uint8_t>(60 + y);
          p[2] = static_cast<std::uint8_t>(90 + jitter);
        }
      }
    }
    frames.frames.push_back(std::move(img));
    track.entries.push_back({f, bx, by, bw, bh});
  }
  write_frame_seq(frames, dir / "frames");
  write_text_file(dir / "face_track.jsonl", format_face_track(track));
  write_text_file(dir / "transcript.txt", sidecar);
  write_text_file(dir / "mt_lexicon.txt", mt);
  write_text_file(dir / "tts_lexicon.txt", kTtsLexicon);

  nlohmann::ordered_json m;
  m["audio"] = "audio.wav";
  m["frames"] = "frames";
  m["face_track"] = "face_track.jsonl";
  m["transcript"] = "transcript.txt";
  m["mt_lexicon"] = "mt_lexicon.txt";
  m["tts_lexicon"] = "tts_lexicon.txt";
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace dub
