#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace harmonic {

/// A key/value region recovered from free-form model output.
struct ExtractedObject {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t begin = 0;  // offset of the opening brace
  std::size_t end = 0;    // one past the last consumed byte
  bool closed = false;    // a closing brace was found
};

/// Scans for the first '{' at or after `from` and reads key/value pairs from
/// it. Keys and values may be double-quoted (JSON escapes honored),
/// single-quoted or bare; separators may be missing. Reading stops at the
/// closing brace, at the end of input, or where the structure breaks down;
/// pairs read up to that point are kept. Never throws on any input.
std::optional<ExtractedObject> extract_object(std::string_view text, std::size_t from = 0);

/// Every object in order, each search starting where the previous ended.
std::vector<ExtractedObject> extract_objects(std::string_view text);

/// JSON string-literal escaping of `raw` (quotes included). Bytes >= 0x80 are
/// passed through, so arbitrary byte strings round-trip through the extractor.
std::string quote_json(std::string_view raw);

}  // namespace harmonic
