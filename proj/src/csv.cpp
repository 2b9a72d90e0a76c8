#include "dagsynth/csv.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include "dagsynth/errors.hpp"

namespace dagsynth {

bool CsvReader::read_row(std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool field_quoted = false;
  char c = 0;
  while (in_.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in_.peek() == '"') {
          in_.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_quoted) {
      in_quotes = true;
      field_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_quoted = false;
    } else if (c == '\r') {
      if (in_.peek() == '\n') {
        in_.get(c);
      }
      break;
    } else if (c == '\n') {
      break;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::kTypeMismatch,
                "unterminated quoted field in record " + std::to_string(record_ + 1));
  }
  if (!any) {
    return false;
  }
  fields.push_back(std::move(field));
  ++record_;
  return true;
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) {
      out.put(',');
    }
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out << f;
      continue;
    }
    out.put('"');
    for (char c : f) {
      if (c == '"') {
        out.put('"');
      }
      out.put(c);
    }
    out.put('"');
  }
  out.put('\n');
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot format number");
  }
  return std::string(buf, end);
}

bool parse_double(std::string_view text, double& value) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') {
    text.remove_prefix(1);
  }
  if (text.empty()) {
    return false;
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(value);
}

}  // namespace dagsynth
