#include "topk/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace topk {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void CsvWriter::comment(std::string_view text) {
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = text.substr(start, end == std::string_view::npos ? text.npos : end - start);
    out_ << "# " << line << '\n';
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
}

void CsvWriter::header(const std::vector<std::string>& columns) {
  columns_ = columns.size();
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (columns_ != 0 && fields.size() != columns_)
    throw std::invalid_argument("CSV row width does not match header");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::string& raw_first_line) {
  fields.clear();
  raw_first_line.clear();
  std::string field;
  bool in_quotes = false, any = false, first_line = true;
  char c;
  while (in.get(c)) {
    any = true;
    if (first_line && c != '\n') raw_first_line += c;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      if (c == '\n') first_line = false;
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (in_quotes) throw std::runtime_error("CSV: unterminated quoted field");
  if (any) fields.push_back(std::move(field));
  return any;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> fields;
  std::string raw;
  bool have_header = false;
  while (read_record(in, fields, raw)) {
    if (!have_header && !raw.empty() && raw[0] == '#') {
      table.comments.push_back(raw.size() > 1 && raw[1] == ' ' ? raw.substr(2) : raw.substr(1));
      continue;
    }
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (!have_header) {
      table.header = fields;
      have_header = true;
    } else {
      if (fields.size() != table.header.size())
        throw std::runtime_error("CSV: row " + std::to_string(table.rows.size() + 1) +
                                 " has " + std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(table.header.size()));
      table.rows.push_back(fields);
    }
  }
  return table;
}

}  // namespace topk
