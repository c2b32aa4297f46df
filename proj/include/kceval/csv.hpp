#pragma once

#include <string>
#include <vector>

namespace kceval {

// RFC 4180 quoting; fields with commas, quotes, or newlines are wrapped.
std::string csv_quote(const std::string& field);

// Joins fields into one row, trailing "\n".
std::string csv_row(const std::vector<std::string>& fields);

// Full-document CSV parse honoring quoted fields. Throws InputError on an
// unterminated quote.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Numeric formatting. Fixed layouts keep goldens byte-stable.
std::string format_sig6(double v);     // 6 significant digits
std::string format_fixed12(double v);  // 12 decimals; row-group share sums stay within 1e-9

}  // namespace kceval
