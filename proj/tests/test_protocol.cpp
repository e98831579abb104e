#include <doctest.h>

#include <chrono>
#include <random>
#include <string>
#include <thread>

#include "dub/engine.hpp"
#include "dub/error.hpp"
#include "dub/protocol.hpp"
#include "dub/subprocess.hpp"

using namespace dub;
using namespace std::chrono_literals;

namespace {

StageMessage text_message(std::uint64_t seq, std::string text) {
  StageMessage m;
  m.stream_id = "input0.text";
  m.seq = seq;
  m.kind = MessageKind::kData;
  m.content_type = ContentType::kText;
  m.payload = std::make_shared<const Payload>(std::move(text));
  return m;
}

class Collect : public engine::Emitter {
 public:
  void emit(ContentType type, Payload payload, double start_s, double end_s) override {
    std::lock_guard lock(mu);
    StageMessage m;
    m.content_type = type;
    m.payload = std::make_shared<const Payload>(std::move(payload));
    m.start_s = start_s;
    m.end_s = end_s;
    out.push_back(std::move(m));
  }
  std::mutex mu;
  std::vector<StageMessage> out;
};

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("base64") {
    const std::string s = "any carnal pleas";
    CHECK(protocol::base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())) == "YW55IGNhcm5hbCBwbGVhcw==");
    std::mt19937_64 rng(81);
    for (int n = 0; n < 40; ++n) {
      std::vector<std::uint8_t> b(n);
      for (auto& v : b) v = static_cast<std::uint8_t>(rng());
      CHECK(protocol::base64_decode(protocol::base64_encode(b)) == b);
    }
    CHECK_THROWS_AS(protocol::base64_decode("Zm9v!"), FormatError);
    CHECK_THROWS_AS(protocol::base64_decode("Zm9"), FormatError);
  }

  TEST_CASE("hello") {
    const protocol::Hello h{"echo", {ContentType::kText}, {ContentType::kText, ContentType::kAudio}, 1};
    const auto line = protocol::format_hello(h);
    CHECK(line == R"({"hello":{"accepts":["text"],"name":"echo","produces":["text","audio"],"version":1}})");
    const auto back = protocol::parse_hello(line);
    CHECK(back.name == "echo");
    CHECK(back.produces == h.produces);

    CHECK_THROWS_AS(protocol::parse_hello("not json"), ProtocolError);
    CHECK_THROWS_AS(protocol::parse_hello(R"({"hello":{"name":"x","accepts":["text"],"produces":["text"]}})"),
                    ProtocolError);
    CHECK_THROWS_AS(
        protocol::parse_hello(R"({"hello":{"name":"x","accepts":["video"],"produces":["text"],"version":1}})"),
        ProtocolError);
    try {
      protocol::parse_hello(R"({"hello":{"name":"x","accepts":["text"],"produces":["text"],"version":2}})");
      FAIL("version 2 accepted");
    } catch (const ProtocolError& e) {
      CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
    }
  }

  TEST_CASE("message lines round trip for every content type") {
    std::vector<std::pair<ContentType, Payload>> cases;
    cases.emplace_back(ContentType::kText, std::string("hallo \"welt\"\n"));
    cases.emplace_back(ContentType::kSsml, std::string("<speak>x</speak>"));
    cases.emplace_back(ContentType::kAudio, AudioBuffer{16000, 1, {0.0, 0.5, -0.25}});
    dsp::MelSpectrogram mel;
    mel.n_mels = 2;
    mel.frames = dsp::Matrix(1, 2, -3.5);
    cases.emplace_back(ContentType::kMel, mel);
    stages::EmphasisTranscript t;
    t.words.push_back({"house", 0.5, 0.9, true});
    cases.emplace_back(ContentType::kTranscript, t);
    prosody::PhonemeProsody p;
    p.phonemes.push_back({"a", true, 8, 200.0, 1.0});
    cases.emplace_back(ContentType::kProsody, p);
    align::AttentionStack st;
    st.heads.push_back(dsp::Matrix(1, 1, 1.0));
    cases.emplace_back(ContentType::kAttn, st);
    FrameChunk chunk;
    chunk.first_index = 25;
    chunk.frames = FrameSequence{3, 2, Rational{25, 1}, {Image(3, 2, 7), Image(3, 2, 9)}};
    chunk.track.entries.push_back({25, 0, 0, 2, 2});
    chunk.tracked = true;
    cases.emplace_back(ContentType::kFrames, chunk);

    std::uint64_t seq = 0;
    for (auto& [type, payload] : cases) {
      StageMessage m;
      m.stream_id = "tts.audio";
      m.seq = seq++;
      m.content_type = type;
      m.payload = std::make_shared<const Payload>(payload);
      m.start_s = 1.25;
      m.end_s = 2.5;
      const auto line = protocol::encode_message(m, Port::kSpeakerReference);
      CHECK(line.find('\n') == std::string::npos);
      const auto w = protocol::decode_message(line);
      CHECK(w.port == Port::kSpeakerReference);
      CHECK(w.message.seq == m.seq);
      CHECK(w.message.content_type == type);
      CHECK(w.message.start_s == 1.25);
      CHECK(serialize_payload(type, *w.message.payload) == serialize_payload(type, payload));
    }
    const auto& fc = std::get<FrameChunk>(cases.back().second);
    const auto back = std::get<FrameChunk>(deserialize_payload(ContentType::kFrames,
                                                               serialize_payload(ContentType::kFrames, fc)));
    CHECK(back.first_index == 25);
    CHECK(back.tracked);
    CHECK(back.frames.frames[1] == fc.frames.frames[1]);
    CHECK(back.track.entries == fc.track.entries);
  }

  TEST_CASE("end and error lines; malformed lines") {
    StageMessage end;
    end.seq = 4;
    end.kind = MessageKind::kEnd;
    CHECK(protocol::decode_message(protocol::encode_message(end)).message.kind == MessageKind::kEnd);
    StageMessage err = end;
    err.kind = MessageKind::kError;
    err.error = "boom";
    CHECK(protocol::decode_message(protocol::encode_message(err)).message.error == "boom");

    CHECK_THROWS_AS(protocol::decode_message("{"), ProtocolError);
    CHECK_THROWS_AS(protocol::decode_message(R"({"seq":-1,"kind":"end"})"), ProtocolError);
    CHECK_THROWS_AS(protocol::decode_message(R"({"seq":0,"kind":"data","content_type":"text"})"),
                    ProtocolError);
    CHECK_THROWS_AS(protocol::decode_message(R"({"seq":0,"kind":"data","content_type":"mel","payload":"eA=="})"),
                    ProtocolError);
    CHECK_THROWS_AS(protocol::decode_message(R"({"seq":0,"kind":"maybe"})"), ProtocolError);
  }
}

TEST_SUITE("external") {
  TEST_CASE("subprocess line io") {
    Subprocess p({"/bin/cat"});
    CHECK(p.write_all("one\ntwo\n", 1000ms));
    CHECK(p.read_line(1000ms) == std::optional<std::string>("one"));
    CHECK(p.read_line(1000ms) == std::optional<std::string>("two"));
    p.close_stdin();
    CHECK(!p.read_line(1000ms));
    CHECK(p.wait(1000ms) == std::optional<int>(0));
  }

  TEST_CASE("subprocess timeout and kill") {
    Subprocess p({"/bin/sleep", "30"});
    CHECK_THROWS_AS(p.read_line(100ms), ProtocolError);
    const auto t0 = std::chrono::steady_clock::now();
    p.kill();
    CHECK(std::chrono::steady_clock::now() - t0 < 2s);
    CHECK_THROWS_AS(Subprocess({"/nonexistent/binary"}), Error);
  }

  TEST_CASE("echo stage handshake and 100 ordered messages") {
    auto stage = engine::make_external_stage("echo", {DUB_ECHO_STAGE}, 10000ms, 5000ms);
    const auto d = stage->descriptor();
    CHECK(d.accepts == std::vector<ContentType>{ContentType::kText});
    CHECK(d.produces == std::vector<ContentType>{ContentType::kText});
    Collect out;
    stage->begin(out);
    for (int i = 0; i < 100; ++i) stage->process(text_message(i, "msg " + std::to_string(i)), Port::kMain, out);
    StageMessage end;
    end.stream_id = "input0.text";
    end.seq = 100;
    end.kind = MessageKind::kEnd;
    end.content_type = ContentType::kText;
    stage->end_of_stream(end, Port::kMain, out);
    stage->finish(out);
    REQUIRE(out.out.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(out.out[i].as<std::string>() == "msg " + std::to_string(i));
  }

  TEST_CASE("handshake failures are typed") {
    CHECK_THROWS_AS(engine::make_external_stage("t", {"/bin/true"}, 1000ms, 2000ms), ProtocolError);
    try {
      engine::make_external_stage(
          "v2",
          {"/bin/sh", "-c",
           R"(echo '{"hello":{"name":"v2","accepts":["text"],"produces":["text"],"version":2}}'; sleep 5)"},
          1000ms, 2000ms);
      FAIL("version 2 accepted");
    } catch (const ProtocolError& e) {
      CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
    }
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(engine::make_external_stage("slow", {"/bin/sleep", "30"}, 1000ms, 200ms), ProtocolError);
    CHECK(std::chrono::steady_clock::now() - t0 < 3s);
    CHECK_THROWS_AS(engine::make_external_stage("junk", {"/bin/echo", "hello there"}, 1000ms, 2000ms),
                    ProtocolError);
  }

  TEST_CASE("crashing stage yields a typed error quickly") {
    auto stage = engine::make_external_stage("crash", {DUB_CRASH_STAGE}, 5000ms, 5000ms);
    Collect out;
    stage->begin(out);
    const auto t0 = std::chrono::steady_clock::now();
    bool typed = false;
    try {
      for (int i = 0; i < 50; ++i) {
        stage->process(text_message(i, "x"), Port::kMain, out);
        std::this_thread::sleep_for(10ms);
      }
      stage->finish(out);
    } catch (const ProtocolError& e) {
      typed = true;
      MESSAGE("crash reported as: " << std::string(e.what()));
    }
    CHECK(typed);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);
  }

  TEST_CASE("echo stage that exits non-zero after end is an error") {
    auto stage = engine::make_external_stage("bad-exit", {DUB_ECHO_STAGE, "--exit-status", "3"}, 5000ms, 5000ms);
    Collect out;
    stage->begin(out);
    stage->process(text_message(0, "x"), Port::kMain, out);
    StageMessage end;
    end.seq = 1;
    end.kind = MessageKind::kEnd;
    stage->end_of_stream(end, Port::kMain, out);
    CHECK_THROWS_AS(stage->finish(out), ProtocolError);
  }

  TEST_CASE("hanging stage trips the watchdog") {
    auto stage = engine::make_external_stage("hang", {DUB_ECHO_STAGE, "--hang-after", "1"}, 300ms, 5000ms);
    Collect out;
    stage->begin(out);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(
        {
          stage->process(text_message(0, "x"), Port::kMain, out);
          stage->process(text_message(1, "y"), Port::kMain, out);
          StageMessage end;
          end.seq = 2;
          end.kind = MessageKind::kEnd;
          stage->end_of_stream(end, Port::kMain, out);
          stage->finish(out);
        },
        ProtocolError);
    CHECK(std::chrono::steady_clock::now() - t0 < 3s);
  }
}
