#include "dub/message.hpp"

#include <cstring>
#include <sstream>

#include "dub/error.hpp"

namespace dub {

namespace {

constexpr std::pair<ContentType, std::string_view> kContentNames[] = {
    {ContentType::kAudio, "audio"},     {ContentType::kMel, "mel"},
    {ContentType::kTranscript, "transcript"}, {ContentType::kSsml, "ssml"},
    {ContentType::kProsody, "prosody"}, {ContentType::kFrames, "frames"},
    {ContentType::kAttn, "attn"},       {ContentType::kText, "text"},
};

std::vector<std::uint8_t> to_bytes(std::string_view s) { return {s.begin(), s.end()}; }
std::string to_string(std::span<const std::uint8_t> b) { return {b.begin(), b.end()}; }

template <typename T>
const T& expect(const Payload& p, ContentType type) {
  if (const T* v = std::get_if<T>(&p)) return *v;
  throw InvalidArgument("payload does not match content type " + std::string(content_type_name(type)));
}

std::vector<std::uint8_t> serialize_frames(const FrameChunk& chunk) {
  const auto& seq = chunk.frames;
  std::ostringstream head;
  head << "frames v1 " << chunk.first_index << ' ' << seq.frames.size() << ' ' << seq.width << ' '
       << seq.height << ' ' << format_rational(seq.frame_rate) << ' ' << (chunk.tracked ? 1 : 0)
       << ' ' << chunk.track.entries.size() << '\n'
       << format_face_track(chunk.track);
  auto out = to_bytes(head.str());
  for (const auto& img : seq.frames) out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

FrameChunk deserialize_frames(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto* begin = bytes.data() + pos;
    const auto* nl = static_cast<const std::uint8_t*>(std::memchr(begin, '\n', bytes.size() - pos));
    if (nl == nullptr) throw FormatError("frames: truncated header");
    std::string line(begin, nl);
    pos = static_cast<std::size_t>(nl - bytes.data()) + 1;
    return line;
  };
  std::istringstream head(next_line());
  std::string magic, version, rate;
  std::size_t count = 0, boxes = 0;
  int tracked = 0;
  FrameChunk chunk;
  if (!(head >> magic >> version >> chunk.first_index >> count >> chunk.frames.width >>
        chunk.frames.height >> rate >> tracked >> boxes) ||
      magic != "frames" || version != "v1")
    throw FormatError("frames: malformed header");
  chunk.frames.frame_rate = parse_rational(rate);
  chunk.tracked = tracked == 1;
  std::string track_text;
  for (std::size_t i = 0; i < boxes; ++i) track_text += next_line() + "\n";
  chunk.track = parse_face_track(track_text);
  const std::size_t raster = static_cast<std::size_t>(chunk.frames.width) * chunk.frames.height * 3;
  if (bytes.size() - pos != raster * count) throw FormatError("frames: raster size mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    Image img(chunk.frames.width, chunk.frames.height);
    std::memcpy(img.rgb.data(), bytes.data() + pos, raster);
    pos += raster;
    chunk.frames.frames.push_back(std::move(img));
  }
  return chunk;
}

}  // namespace

std::string_view content_type_name(ContentType t) {
  for (const auto& [type, name] : kContentNames)
    if (type == t) return name;
  return "text";
}

ContentType parse_content_type(std::string_view name) {
  for (const auto& [type, n] : kContentNames)
    if (n == name) return type;
  throw FormatError("unknown content type '" + std::string(name) + "'");
}

std::string_view message_kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::kData: return "data";
    case MessageKind::kEnd: return "end";
    case MessageKind::kError: return "error";
  }
  return "data";
}

MessageKind parse_message_kind(std::string_view name) {
  if (name == "data") return MessageKind::kData;
  if (name == "end") return MessageKind::kEnd;
  if (name == "error") return MessageKind::kError;
  throw FormatError("unknown message kind '" + std::string(name) + "'");
}

std::string_view port_name(Port p) {
  switch (p) {
    case Port::kMain: return "main";
    case Port::kSpeakerReference: return "reference";
    case Port::kDubbedAudio: return "dubbed";
  }
  return "main";
}

Port parse_port(std::string_view name) {
  if (name == "main") return Port::kMain;
  if (name == "reference") return Port::kSpeakerReference;
  if (name == "dubbed") return Port::kDubbedAudio;
  throw FormatError("unknown port '" + std::string(name) + "'");
}

std::size_t payload_bytes(const Payload& p) {
  struct Visitor {
    std::size_t operator()(std::monostate) const { return 0; }
    std::size_t operator()(const AudioBuffer& a) const { return a.samples.size() * sizeof(double); }
    std::size_t operator()(const dsp::MelSpectrogram& m) const {
      return m.frames.data.size() * sizeof(double);
    }
    std::size_t operator()(const stages::EmphasisTranscript& t) const {
      std::size_t n = 0;
      for (const auto& w : t.words) n += w.text.size() + 2 * sizeof(double) + 1;
      return n;
    }
    std::size_t operator()(const prosody::PhonemeProsody& p) const {
      std::size_t n = 0;
      for (const auto& ph : p.phonemes) n += ph.symbol.size() + sizeof(prosody::Phoneme);
      return n;
    }
    std::size_t operator()(const FrameChunk& f) const {
      std::size_t n = f.track.entries.size() * sizeof(FaceBox);
      for (const auto& img : f.frames.frames) n += img.rgb.size();
      return n;
    }
    std::size_t operator()(const align::AttentionStack& s) const {
      std::size_t n = 0;
      for (const auto& h : s.heads) n += h.data.size() * sizeof(double);
      return n;
    }
    std::size_t operator()(const std::string& s) const { return s.size(); }
  };
  return std::visit(Visitor{}, p);
}

void check_payload(ContentType type, const Payload& p) {
  switch (type) {
    case ContentType::kAudio: expect<AudioBuffer>(p, type); break;
    case ContentType::kMel: expect<dsp::MelSpectrogram>(p, type); break;
    case ContentType::kTranscript: expect<stages::EmphasisTranscript>(p, type); break;
    case ContentType::kProsody: expect<prosody::PhonemeProsody>(p, type); break;
    case ContentType::kFrames: expect<FrameChunk>(p, type); break;
    case ContentType::kAttn: expect<align::AttentionStack>(p, type); break;
    case ContentType::kSsml:
    case ContentType::kText: expect<std::string>(p, type); break;
  }
}

std::vector<std::uint8_t> serialize_payload(ContentType type, const Payload& p) {
  switch (type) {
    case ContentType::kAudio: return encode_wav(expect<AudioBuffer>(p, type));
    case ContentType::kMel: return to_bytes(dsp::format_mel(expect<dsp::MelSpectrogram>(p, type)));
    case ContentType::kTranscript:
      return to_bytes(stages::format_transcript(expect<stages::EmphasisTranscript>(p, type)));
    case ContentType::kProsody:
      return to_bytes(prosody::format_prosody(expect<prosody::PhonemeProsody>(p, type)));
    case ContentType::kFrames: return serialize_frames(expect<FrameChunk>(p, type));
    case ContentType::kAttn:
      return to_bytes(align::format_attention(expect<align::AttentionStack>(p, type)));
    case ContentType::kSsml:
    case ContentType::kText: return to_bytes(expect<std::string>(p, type));
  }
  return {};
}

Payload deserialize_payload(ContentType type, std::span<const std::uint8_t> bytes) {
  switch (type) {
    case ContentType::kAudio: return decode_wav(bytes);
    case ContentType::kMel: return dsp::parse_mel(to_string(bytes));
    case ContentType::kTranscript: return stages::parse_transcript(to_string(bytes));
    case ContentType::kProsody: return prosody::parse_prosody(to_string(bytes));
    case ContentType::kFrames: return deserialize_frames(bytes);
    case ContentType::kAttn: return align::parse_attention(to_string(bytes));
    case ContentType::kSsml:
    case ContentType::kText: return to_string(bytes);
  }
  return std::monostate{};
}

std::string_view payload_extension(ContentType type) {
  switch (type) {
    case ContentType::kAudio: return "wav";
    case ContentType::kMel: return "mel";
    case ContentType::kTranscript: return "transcript";
    case ContentType::kProsody: return "prosody";
    case ContentType::kFrames: return "frames";
    case ContentType::kAttn: return "attn";
    case ContentType::kSsml: return "ssml";
    case ContentType::kText: return "txt";
  }
  return "bin";
}

}  // namespace dub
