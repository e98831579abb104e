#include "dub/ssml.hpp"

#include <cctype>

#include "dub/error.hpp"

namespace dub::ssml {

std::string_view level_name(EmphasisLevel level) {
  switch (level) {
    case EmphasisLevel::kReduced: return "reduced";
    case EmphasisLevel::kModerate: return "moderate";
    case EmphasisLevel::kStrong: return "strong";
  }
  return "strong";
}

std::optional<EmphasisLevel> parse_level(std::string_view name) {
  if (name == "reduced") return EmphasisLevel::kReduced;
  if (name == "moderate") return EmphasisLevel::kModerate;
  if (name == "strong") return EmphasisLevel::kStrong;
  return std::nullopt;
}

std::vector<std::string> Document::words() const {
  std::vector<std::string> out;
  for (const auto& run : runs) out.insert(out.end(), run.words.begin(), run.words.end());
  return out;
}

std::set<std::size_t> Document::emphasized(std::optional<EmphasisLevel> level) const {
  std::set<std::size_t> out;
  std::size_t index = 0;
  for (const auto& run : runs) {
    const bool hit = run.emphasis && (!level || *run.emphasis == *level);
    for (std::size_t i = 0; i < run.words.size(); ++i, ++index)
      if (hit) out.insert(index);
  }
  return out;
}

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string emit(const std::vector<std::string>& tokens, const std::set<std::size_t>& emphasized,
                 EmphasisLevel level) {
  for (std::size_t i : emphasized)
    if (i >= tokens.size())
      throw InvalidArgument("ssml emit: emphasis index " + std::to_string(i) + " out of range");
  std::string out = "<speak>";
  const std::string open = "<emphasis level=\"" + std::string(level_name(level)) + "\">";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool emph = emphasized.contains(i);
    const bool prev = i > 0 && emphasized.contains(i - 1);
    if (emph && !prev) {
      if (i > 0) out += ' ';
      out += open;
    } else if (i > 0) {
      if (!emph && prev) out += "</emphasis>";
      out += ' ';
    }
    out += escape(tokens[i]);
  }
  if (!tokens.empty() && emphasized.contains(tokens.size() - 1)) out += "</emphasis>";
  out += "</speak>";
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Document run() {
    skip_prolog();
    if (!try_open_tag("speak")) fail("missing <speak> root element");
    parse_content(/*in_emphasis=*/false);
    if (!try_close_tag("speak")) fail("expected </speak>");
    skip_space();
    if (pos_ != text_.size()) fail("content after </speak>");
    flush_word();
    return std::move(doc_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("ssml: " + what + " (at offset " + std::to_string(pos_) + ")");
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  void skip_space() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void skip_prolog() {
    skip_space();
    if (text_.substr(pos_).starts_with("<?xml")) {
      auto end = text_.find("?>", pos_);
      if (end == std::string_view::npos) fail("unterminated XML declaration");
      pos_ = end + 2;
      skip_space();
    }
  }

  std::string_view read_name() {
    const auto start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == ':' ||
                      peek() == '-' || peek() == '_' || peek() == '.'))
      ++pos_;
    return text_.substr(start, pos_ - start);
  }

  struct Attribute {
    std::string name;
    std::string value;
  };

  /// Parses `<name attr="v" ...>` starting at '<'. Returns false (and
  /// rewinds) if the tag has another name.
  bool try_open_tag(std::string_view name, std::vector<Attribute>* attrs = nullptr) {
    const auto save = pos_;
    if (eof() || peek() != '<') return false;
    ++pos_;
    if (read_name() != name) {
      pos_ = save;
      return false;
    }
    for (;;) {
      skip_space();
      if (eof()) fail("unterminated tag");
      if (peek() == '>') {
        ++pos_;
        return true;
      }
      if (peek() == '/') fail("self-closing <" + std::string(name) + "> is not supported");
      Attribute a;
      a.name = std::string(read_name());
      if (a.name.empty()) fail("malformed attribute");
      skip_space();
      if (eof() || peek() != '=') fail("expected '=' after attribute " + a.name);
      ++pos_;
      skip_space();
      if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
      const char quote = peek();
      ++pos_;
      const auto end = text_.find(quote, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value");
      a.value = decode_entities(text_.substr(pos_, end - pos_));
      pos_ = end + 1;
      if (attrs != nullptr) attrs->push_back(std::move(a));
    }
  }

  bool try_close_tag(std::string_view name) {
    const auto save = pos_;
    if (text_.substr(pos_).starts_with("</")) {
      pos_ += 2;
      if (read_name() == name) {
        skip_space();
        if (!eof() && peek() == '>') {
          ++pos_;
          return true;
        }
        fail("malformed closing tag");
      }
    }
    pos_ = save;
    return false;
  }

  std::string decode_entities(std::string_view raw) {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      const auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("unterminated entity");
      const auto name = raw.substr(i + 1, semi - i - 1);
      if (name == "amp") out += '&';
      else if (name == "lt") out += '<';
      else if (name == "gt") out += '>';
      else if (name == "quot") out += '"';
      else if (name == "apos") out += '\'';
      else fail("unknown entity &" + std::string(name) + ";");
      i = semi;
    }
    return out;
  }

  void parse_content(bool in_emphasis) {
    for (;;) {
      if (eof()) fail("unexpected end of input");
      if (peek() == '<') {
        flush_word();
        if (text_.substr(pos_).starts_with("</")) return;
        if (text_.substr(pos_).starts_with("<!--")) {
          const auto end = text_.find("-->", pos_);
          if (end == std::string_view::npos) fail("unterminated comment");
          pos_ = end + 3;
          continue;
        }
        std::vector<Attribute> attrs;
        if (try_open_tag("emphasis", &attrs)) {
          if (in_emphasis) fail("nested <emphasis> is not allowed");
          EmphasisLevel level = EmphasisLevel::kModerate;
          for (const auto& a : attrs) {
            if (a.name != "level") fail("unsupported attribute '" + a.name + "' on <emphasis>");
            auto parsed = parse_level(a.value);
            if (!parsed) fail("unknown emphasis level '" + a.value + "'");
            level = *parsed;
          }
          current_ = level;
          parse_content(true);
          if (!try_close_tag("emphasis")) fail("expected </emphasis>");
          current_.reset();
          continue;
        }
        ++pos_;
        fail("unsupported element <" + std::string(read_name()) + ">");
      }
      // Text up to the next tag.
      const auto end = text_.find('<', pos_);
      const auto chunk = text_.substr(pos_, end == std::string_view::npos ? text_.size() - pos_ : end - pos_);
      const std::string decoded = decode_entities(chunk);
      pos_ += chunk.size();
      for (char c : decoded) {
        if (std::isspace(static_cast<unsigned char>(c))) {
          flush_word();
        } else {
          word_ += c;
        }
      }
    }
  }

  void flush_word() {
    if (word_.empty()) return;
    if (doc_.runs.empty() || doc_.runs.back().emphasis != current_)
      doc_.runs.push_back(Run{{}, current_});
    doc_.runs.back().words.push_back(std::move(word_));
    word_.clear();
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  Document doc_;
  std::string word_;
  std::optional<EmphasisLevel> current_;
};

}  // namespace

Document parse(std::string_view text) { return Parser(text).run(); }

}  // namespace dub::ssml
