#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dagsynth {

// RFC-4180 style reader: comma separated, double-quoted fields may contain
// commas, quotes ("") and line breaks. Accepts LF and CRLF line endings.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Reads the next record into `fields`. Returns false at end of input.
  bool read_row(std::vector<std::string>& fields);

  // 1-based number of the record most recently returned (header is 1).
  std::size_t record_number() const noexcept { return record_; }

 private:
  std::istream& in_;
  std::size_t record_ = 0;
};

void write_csv_row(std::ostream& out, std::span<const std::string> fields);

// Shortest text that parses back to the same double.
std::string format_double(double value);

// Strict parse of a whole field as a finite double.
bool parse_double(std::string_view text, double& value);

}  // namespace dagsynth
