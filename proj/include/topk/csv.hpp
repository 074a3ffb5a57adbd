#pragma once

// Minimal CSV emitter/reader: '#' comment lines, one header row, RFC 4180
// quoting (fields containing a comma, quote or newline are double-quoted,
// embedded quotes doubled).

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace topk {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double x);

std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  /// Writes "# text"; multi-line text becomes one comment line per line.
  void comment(std::string_view text);
  void header(const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  std::size_t columns_ = 0;
};

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Parses a stream written by CsvWriter (or any RFC 4180 file with an
/// optional '#' preamble). The first non-comment record is the header.
CsvTable read_csv(std::istream& in);

}  // namespace topk
