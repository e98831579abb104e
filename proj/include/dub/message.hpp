#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dub/dsp.hpp"
#include "dub/emphasis_align.hpp"
#include "dub/media_io.hpp"
#include "dub/prosody.hpp"
#include "dub/stages.hpp"

namespace dub {

enum class ContentType { kAudio, kMel, kTranscript, kSsml, kProsody, kFrames, kAttn, kText };

std::string_view content_type_name(ContentType t);
ContentType parse_content_type(std::string_view name);  // throws FormatError

enum class MessageKind { kData, kEnd, kError };

std::string_view message_kind_name(MessageKind k);
MessageKind parse_message_kind(std::string_view name);

/// Consecutive video frames with the face boxes known for them. `tracked`
/// is false when no detector or sidecar supplied boxes yet.
struct FrameChunk {
  std::size_t first_index = 0;
  FrameSequence frames;
  FaceTrack track;  // absolute frame indices
  bool tracked = false;
};

using Payload = std::variant<std::monostate, AudioBuffer, dsp::MelSpectrogram,
                             stages::EmphasisTranscript, prosody::PhonemeProsody, FrameChunk,
                             align::AttentionStack, std::string>;

/// Approximate in-memory size, used for throughput accounting.
std::size_t payload_bytes(const Payload& p);

/// Checks that the payload alternative matches the content type.
void check_payload(ContentType type, const Payload& p);

/// Module serialisation used on the wire and for written intermediates.
std::vector<std::uint8_t> serialize_payload(ContentType type, const Payload& p);
Payload deserialize_payload(ContentType type, std::span<const std::uint8_t> bytes);

/// File extension for a serialised payload.
std::string_view payload_extension(ContentType type);

/// How a message reaches a stage.
enum class Port {
  kMain,              // previous stage of the same branch, or the source
  kSpeakerReference,  // original input audio, for later audio stages
  kDubbedAudio,       // output of the audio branch, into the join stage
};

std::string_view port_name(Port p);
Port parse_port(std::string_view name);

struct StageMessage {
  std::string stream_id;
  std::uint64_t seq = 0;
  MessageKind kind = MessageKind::kData;
  ContentType content_type = ContentType::kText;
  std::shared_ptr<const Payload> payload;
  /// Media time span the message covers on its stream's timeline.
  double start_s = 0.0;
  double end_s = 0.0;
  std::string error;

  template <typename T>
  const T& as() const {
    return std::get<T>(*payload);
  }
};

}  // namespace dub
