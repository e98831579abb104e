#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dub/error.hpp"
#include "dub/prosody.hpp"
#include "dub/ssml.hpp"

using namespace dub;
using namespace dub::prosody;

TEST_SUITE("ssml") {
  TEST_CASE("emit examples") {
    const std::vector<std::string> w{"das", "Haus", "brennt"};
    CHECK(ssml::emit(w, {}) == "<speak>das Haus brennt</speak>");
    CHECK(ssml::emit(w, {1}) == "<speak>das <emphasis level=\"strong\">Haus</emphasis> brennt</speak>");
    CHECK(ssml::emit({"A&B"}, {0}) == "<speak><emphasis level=\"strong\">A&amp;B</emphasis></speak>");
    CHECK(ssml::emit(w, {0, 1}, ssml::EmphasisLevel::kModerate) ==
          "<speak><emphasis level=\"moderate\">das Haus</emphasis> brennt</speak>");
    CHECK(ssml::escape("<\"&>") == "&lt;&quot;&amp;&gt;");
    CHECK_THROWS_AS(ssml::emit(w, {3}), InvalidArgument);
  }

  TEST_CASE("parse examples") {
    CHECK(ssml::parse("<speak></speak>").runs.empty());
    const auto d = ssml::parse("<speak>das <emphasis level=\"strong\">Haus</emphasis> brennt</speak>");
    REQUIRE(d.runs.size() == 3);
    CHECK(d.runs[0] == ssml::Run{{"das"}, std::nullopt});
    CHECK(d.runs[1] == ssml::Run{{"Haus"}, ssml::EmphasisLevel::kStrong});
    CHECK(d.runs[2] == ssml::Run{{"brennt"}, std::nullopt});
    CHECK(d.emphasized() == std::set<std::size_t>{1});
  }

  TEST_CASE("parse errors") {
    CHECK_THROWS_AS(ssml::parse("<speak><emphasis><emphasis>x</emphasis></emphasis></speak>"), FormatError);
    CHECK_THROWS_AS(ssml::parse("das Haus"), FormatError);
    CHECK_THROWS_AS(ssml::parse("<speak><prosody rate=\"slow\">x</prosody></speak>"), FormatError);
    CHECK_THROWS_AS(ssml::parse("<speak>&nbsp;</speak>"), FormatError);
    CHECK_THROWS_AS(ssml::parse("<speak><break/></speak>"), FormatError);
    CHECK_THROWS_AS(ssml::parse("<speak>x</speak> trailing"), FormatError);
    CHECK_THROWS_AS(ssml::parse("<speak><emphasis level=\"loud\">x</emphasis></speak>"), FormatError);
  }

  TEST_CASE("adjacent runs merge into canonical form") {
    const auto d = ssml::parse(
        "<speak><emphasis level=\"strong\">a</emphasis> <emphasis level=\"strong\">b</emphasis> c</speak>");
    REQUIRE(d.runs.size() == 2);
    CHECK(d.runs[0].words == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("randomised round trip") {
    std::mt19937_64 rng(31);
    const std::string alphabet = "abcXYZ&<>\"'019";
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> tokens(rng() % 7);
      for (auto& t : tokens) {
        const std::size_t len = 1 + rng() % 5;
        for (std::size_t i = 0; i < len; ++i) t += alphabet[rng() % alphabet.size()];
      }
      std::set<std::size_t> emph;
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (rng() % 3 == 0) emph.insert(i);
      const auto level = static_cast<ssml::EmphasisLevel>(rng() % 3);
      const auto text = ssml::emit(tokens, emph, level);
      const auto doc = ssml::parse(text);
      CHECK(doc.words() == tokens);
      CHECK(doc.emphasized(level) == emph);
      CHECK(doc.emphasized() == emph);
      const std::string inner = text.substr(7, text.size() - 15);
      std::string stripped;
      bool in_tag = false;
      for (char c : inner) {
        if (c == '<') in_tag = true;
        if (!in_tag) stripped += c;
        if (c == '>') in_tag = false;
      }
      CHECK(stripped.find_first_of("<>\"") == std::string::npos);
      CHECK(ssml::emit(doc.words(), doc.emphasized(), level) == text);
    }
  }
}

namespace {

PhonemeProsody track(std::initializer_list<Phoneme> ph) { return PhonemeProsody{ph}; }

}  // namespace

TEST_SUITE("prosody") {
  TEST_CASE("empty emphasis is identity") {
    const auto p = track({{"a", true, 8, 200.0, 1.0}, {"s", false, 5, 0.0, 0.7}});
    const WordSpans spans{{0, 0, 2}};
    CHECK(apply_emphasis(p, spans, {}) == p);
  }

  TEST_CASE("single voiced phoneme worked example") {
    const auto p = track({{"a", true, 8, 200.0, 1.0}});
    const auto out = apply_emphasis(p, {{0, 0, 1}}, {0});
    CHECK(out.phonemes[0].duration_frames == 10);
    CHECK(out.phonemes[0].energy == 1.5);
    CHECK(std::abs(out.phonemes[0].pitch_hz - 200.0 * std::pow(2.0, 2.0 / 12.0)) < 1e-9);
    CHECK(out.phonemes[0].pitch_hz == doctest::Approx(224.49).epsilon(1e-4));
  }

  TEST_CASE("below-median word is lowered") {
    const auto p = track({{"a", true, 8, 150.0, 1.0}, {"o", true, 8, 250.0, 1.0}});
    const WordSpans spans{{0, 0, 1}, {1, 1, 2}};
    const auto out = apply_emphasis(p, spans, {0});
    CHECK(std::abs(out.phonemes[0].pitch_hz - 150.0 * std::pow(2.0, -2.0 / 12.0)) < 1e-9);
    CHECK(out.phonemes[1] == p.phonemes[1]);

    EmphasisPolicy toward;
    toward.direction = PitchDirection::kTowardMedian;
    const auto t = apply_emphasis(p, spans, {0}, toward);
    CHECK(std::abs(t.phonemes[0].pitch_hz - 150.0 * std::pow(2.0, 2.0 / 12.0)) < 1e-9);
  }

  TEST_CASE("rounding is half up and unvoiced pitch stays zero") {
    const auto p = track({{"t", false, 2, 0.0, 1.0}, {"a", true, 6, 180.0, 2.0}});
    const auto out = apply_emphasis(p, {{0, 0, 2}}, {0});
    CHECK(out.phonemes[0].duration_frames == 3);  // 2.5 -> 3
    CHECK(out.phonemes[0].pitch_hz == 0.0);
    CHECK(out.phonemes[1].duration_frames == 8);  // 7.5 -> 8
    out.validate();
  }

  TEST_CASE("errors") {
    const auto p = track({{"a", true, 8, 200.0, 1.0}});
    CHECK_THROWS_AS(apply_emphasis(p, {{0, 0, 1}}, {1}), InvalidArgument);
    CHECK_THROWS_AS(apply_emphasis(p, {{0, 0, 2}}, {0}), InvalidArgument);
    EmphasisPolicy bad;
    bad.duration_mult = 0.5;
    CHECK_THROWS_AS(apply_emphasis(p, {{0, 0, 1}}, {0}, bad), InvalidArgument);
    CHECK_THROWS_AS(track({{"s", false, 1, 100.0, 1.0}}).validate(), InvalidArgument);
  }

  TEST_CASE("median is permutation invariant") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> hz(100.0, 300.0);
    PhonemeProsody p;
    for (int i = 0; i < 9; ++i) p.phonemes.push_back({"a", true, 4, hz(rng), 1.0});
    const double m = median_voiced_pitch(p);
    std::shuffle(p.phonemes.begin(), p.phonemes.end(), rng);
    CHECK(median_voiced_pitch(p) == m);
    CHECK(median_voiced_pitch(track({{"s", false, 1, 0.0, 1.0}})) == 0.0);
  }

  TEST_CASE("length regulation") {
    const auto p = track({{"a", true, 2, 200.0, 1.0}, {"b", true, 0, 190.0, 1.0}, {"c", false, 3, 0.0, 0.5}});
    const auto f = length_regulate(p);
    REQUIRE(f.size() == 5);
    CHECK(f[0].symbol == "a");
    CHECK(f[1].symbol == "a");
    CHECK(f[2].symbol == "c");
    CHECK(f[4].phoneme_index == 2);
    CHECK(length_regulate(PhonemeProsody{}).empty());
  }

  TEST_CASE("prosody text round trip") {
    const auto p = track({{"au", true, 10, 166.296, 1.5}, {"sh", false, 8, 0.0, 1.0}});
    const auto text = format_prosody(p);
    const auto back = parse_prosody(text);
    REQUIRE(back.phonemes.size() == 2);
    CHECK(back.phonemes[0].symbol == "au");
    CHECK(back.phonemes[0].duration_frames == 10);
    CHECK(std::abs(back.phonemes[0].pitch_hz - 166.296) < 1e-9);
    CHECK(parse_prosody("").phonemes.empty());
    CHECK_THROWS_AS(parse_prosody("a 1 x 200 1\n"), FormatError);
  }
}
