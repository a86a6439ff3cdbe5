#include "harmonic/extract.hpp"

#include <cstdint>

namespace harmonic {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::optional<std::uint32_t> read_hex4(std::string_view text, std::size_t pos) {
  if (pos + 4 > text.size()) return std::nullopt;
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    int h = hex_value(text[pos + i]);
    if (h < 0) return std::nullopt;
    v = v * 16 + static_cast<std::uint32_t>(h);
  }
  return v;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Reads a quoted string starting at text[pos] (the quote). Returns nullopt if
// unterminated; on success `pos` is one past the closing quote.
std::optional<std::string> read_quoted(std::string_view text, std::size_t& pos) {
  const char quote = text[pos];
  std::string out;
  std::size_t i = pos + 1;
  while (i < text.size()) {
    char c = text[i];
    if (c == quote) {
      pos = i + 1;
      return out;
    }
    if (c != '\\' || i + 1 >= text.size()) {
      out.push_back(c);
      ++i;
      continue;
    }
    char e = text[i + 1];
    i += 2;
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case 'b': out.push_back('\b'); break;
      case 'f': out.push_back('\f'); break;
      case 'u': {
        auto cp = read_hex4(text, i);
        if (!cp) {
          out += "\\u";
          break;
        }
        i += 4;
        std::uint32_t code = *cp;
        if (code >= 0xD800 && code <= 0xDBFF && i + 1 < text.size() && text[i] == '\\' && text[i + 1] == 'u') {
          auto lo = read_hex4(text, i + 2);
          if (lo && *lo >= 0xDC00 && *lo <= 0xDFFF) {
            code = 0x10000 + ((code - 0xD800) << 10) + (*lo - 0xDC00);
            i += 6;
          }
        }
        append_utf8(out, code);
        break;
      }
      default:
        // \" \\ \/ \' and unknown escapes all yield the escaped character.
        out.push_back(e);
    }
  }
  return std::nullopt;
}

std::string read_bare(std::string_view text, std::size_t& pos, std::string_view stops) {
  std::size_t start = pos;
  while (pos < text.size() && stops.find(text[pos]) == std::string_view::npos) ++pos;
  return std::string(trim(text.substr(start, pos - start)));
}

void skip_space(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
}

}  // namespace

std::optional<ExtractedObject> extract_object(std::string_view text, std::size_t from) {
  const std::size_t open = text.find('{', from);
  if (open == std::string_view::npos) return std::nullopt;

  ExtractedObject obj;
  obj.begin = open;
  std::size_t i = open + 1;
  while (true) {
    while (i < text.size() && (is_space(text[i]) || text[i] == ',')) ++i;
    if (i >= text.size()) break;
    if (text[i] == '}') {
      obj.closed = true;
      ++i;
      break;
    }

    std::string key;
    if (text[i] == '"' || text[i] == '\'') {
      auto q = read_quoted(text, i);
      if (!q) break;
      key = std::move(*q);
    } else {
      key = read_bare(text, i, ":,{}\n");
    }
    skip_space(text, i);
    if (i >= text.size() || text[i] != ':') break;
    ++i;
    skip_space(text, i);
    if (i >= text.size()) break;

    std::string value;
    if (text[i] == '"' || text[i] == '\'') {
      auto q = read_quoted(text, i);
      if (!q) break;
      value = std::move(*q);
    } else {
      value = read_bare(text, i, ",}\n");
    }
    obj.pairs.emplace_back(std::move(key), std::move(value));
  }
  obj.end = i;
  return obj;
}

std::vector<ExtractedObject> extract_objects(std::string_view text) {
  std::vector<ExtractedObject> out;
  std::size_t from = 0;
  while (auto obj = extract_object(text, from)) {
    from = obj->end > obj->begin ? obj->end : obj->begin + 1;
    out.push_back(std::move(*obj));
  }
  return out;
}

std::string quote_json(std::string_view raw) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size() + 2);
  out.push_back('"');
  for (char c : raw) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          out += "\\u00";
          out.push_back(kHex[(c >> 4) & 0xF]);
          out.push_back(kHex[c & 0xF]);
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace harmonic
