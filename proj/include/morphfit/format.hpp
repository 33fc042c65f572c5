#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace morphfit {

/// Round-trip-safe text form of a double (17 significant digits, `nan`,
/// `inf`, `-inf`).
std::string format_double(double value);

/// Strict parse of a whole field; false on any trailing or missing text.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

/// Splits on `sep` without trimming.
std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace morphfit
