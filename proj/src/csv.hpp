#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace harmonic::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks; CRLF and LF both end a row. Blank lines are skipped. Throws
/// DataError on an unterminated quote or a ragged row.
Table parse(std::string_view text);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

std::string read_file(const std::string& path);

}  // namespace harmonic::csv
