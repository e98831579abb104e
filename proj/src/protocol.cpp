#include "dub/protocol.hpp"

#include <json.hpp>
#include <sodium.h>

#include "dub/error.hpp"

namespace dub::protocol {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.pop_back();  // terminating NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw FormatError("invalid base64 payload");
  out.resize(len);
  return out;
}

namespace {

json parse_object(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ProtocolError("malformed protocol line: " + std::string(line.substr(0, 200)));
  return j;
}

std::vector<ContentType> type_list(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array())
    throw ProtocolError(std::string("hello: '") + key + "' must be an array");
  std::vector<ContentType> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw ProtocolError(std::string("hello: '") + key + "' must hold strings");
    try {
      out.push_back(parse_content_type(v.get<std::string>()));
    } catch (const FormatError& e) {
      throw ProtocolError(std::string("hello: ") + e.what());
    }
  }
  return out;
}

}  // namespace

std::string format_hello(const Hello& hello) {
  json accepts = json::array(), produces = json::array();
  for (auto t : hello.accepts) accepts.push_back(content_type_name(t));
  for (auto t : hello.produces) produces.push_back(content_type_name(t));
  json j = {{"hello",
             {{"name", hello.name},
              {"accepts", accepts},
              {"produces", produces},
              {"version", hello.version}}}};
  return j.dump();
}

Hello parse_hello(std::string_view line) {
  const json j = parse_object(line);
  if (!j.contains("hello") || !j["hello"].is_object())
    throw ProtocolError("expected a hello object, got: " + std::string(line.substr(0, 200)));
  const json& h = j["hello"];
  if (!h.contains("version") || !h["version"].is_number_integer())
    throw ProtocolError("hello: missing integer 'version'");
  Hello out;
  out.version = h["version"].get<int>();
  if (out.version != kVersion)
    throw ProtocolError("hello: protocol version mismatch (got " + std::to_string(out.version) +
                        ", expected " + std::to_string(kVersion) + ")");
  if (!h.contains("name") || !h["name"].is_string()) throw ProtocolError("hello: missing 'name'");
  out.name = h["name"].get<std::string>();
  out.accepts = type_list(h, "accepts");
  out.produces = type_list(h, "produces");
  if (out.accepts.empty() || out.produces.empty())
    throw ProtocolError("hello: accepts and produces must be non-empty");
  return out;
}

std::string encode_message(const StageMessage& msg, Port port) {
  json j = {{"seq", msg.seq},
            {"kind", message_kind_name(msg.kind)},
            {"content_type", content_type_name(msg.content_type)}};
  if (msg.kind == MessageKind::kData && msg.payload)
    j["payload"] = base64_encode(serialize_payload(msg.content_type, *msg.payload));
  if (!msg.stream_id.empty()) j["stream"] = msg.stream_id;
  j["port"] = port_name(port);
  if (msg.kind == MessageKind::kData) {
    j["start_s"] = msg.start_s;
    j["end_s"] = msg.end_s;
  }
  if (msg.kind == MessageKind::kError) j["error"] = msg.error;
  return j.dump();
}

WireMessage decode_message(std::string_view line) {
  const json j = parse_object(line);
  WireMessage out;
  StageMessage& m = out.message;
  try {
    if (!j.contains("seq") || !j["seq"].is_number_unsigned())
      throw ProtocolError("message: missing non-negative integer 'seq'");
    m.seq = j["seq"].get<std::uint64_t>();
    if (!j.contains("kind") || !j["kind"].is_string())
      throw ProtocolError("message: missing 'kind'");
    m.kind = parse_message_kind(j["kind"].get<std::string>());
    if (j.contains("content_type"))
      m.content_type = parse_content_type(j.at("content_type").get<std::string>());
    else if (m.kind == MessageKind::kData)
      throw ProtocolError("message: data without 'content_type'");
    if (j.contains("stream")) m.stream_id = j["stream"].get<std::string>();
    if (j.contains("port")) out.port = parse_port(j["port"].get<std::string>());
    if (j.contains("start_s")) m.start_s = j["start_s"].get<double>();
    if (j.contains("end_s")) m.end_s = j["end_s"].get<double>();
    if (j.contains("error")) m.error = j["error"].get<std::string>();
    if (m.kind == MessageKind::kData) {
      if (!j.contains("payload") || !j["payload"].is_string())
        throw ProtocolError("message: data without base64 'payload'");
      const auto bytes = base64_decode(j["payload"].get<std::string>());
      m.payload = std::make_shared<const Payload>(deserialize_payload(m.content_type, bytes));
    }
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("message: ") + e.what());
  }
  return out;
}

}  // namespace dub::protocol
