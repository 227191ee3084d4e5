#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "hdiv/mat_core.hpp"

namespace hdiv {

/// Headerless, comma-delimited numeric CSV. Throws InvalidArgument on a
/// malformed cell or ragged rows (message names the line).
Matrix parse_csv_matrix(std::string_view text, std::string_view origin = "<csv>");
Matrix read_csv_matrix(const std::string& path);

/// Locale-independent shortest form with at most `digits` significant digits.
std::string format_number(double v, int digits = 6);

/// Shortest representation that round-trips exactly.
std::string format_exact(double v);

void write_csv_matrix(std::ostream& out, const Matrix& m);

/// Joins cells with commas and appends a newline.
std::string csv_line(const std::vector<std::string>& cells);

}  // namespace hdiv
