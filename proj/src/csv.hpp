#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace crowdbin::detail {

/// Splits one CSV line into fields. Supports double-quoted fields with ""
/// escapes; a trailing '\r' is dropped. Throws Error on an unterminated
/// quote.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field when it contains a comma, quote, or newline.
std::string csv_escape(std::string_view field);

std::string_view trim(std::string_view s);

/// Reads lines while tracking the 1-based line number of the last line read.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line);
  std::size_t line_number() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace crowdbin::detail
