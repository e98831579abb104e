#pragma once

// Line-delimited wire format spoken with external stage processes. Every
// line is one JSON object: either the child's hello, or a message whose
// payload is the base64 of the module serialisation of its content type.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dub/message.hpp"

namespace dub::protocol {

inline constexpr int kVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);  // throws FormatError

struct Hello {
  std::string name;
  std::vector<ContentType> accepts;
  std::vector<ContentType> produces;
  int version = kVersion;
};

std::string format_hello(const Hello& hello);

/// Throws ProtocolError on malformed JSON, missing fields, unknown content
/// types or a version other than kVersion.
Hello parse_hello(std::string_view line);

/// A decoded message line. `port` is only meaningful engine -> child.
struct WireMessage {
  StageMessage message;
  Port port = Port::kMain;
};

/// No trailing newline.
std::string encode_message(const StageMessage& msg, Port port = Port::kMain);

/// Throws ProtocolError on malformed lines or payloads.
WireMessage decode_message(std::string_view line);

}  // namespace dub::protocol
