#pragma once

// Minimal CSV helpers for the trace and record files (no quoting needed:
// every field is a number or a bare identifier).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace brownout {

std::string trim(std::string_view s);
std::vector<std::string> split_csv_line(std::string_view line);

/// Parsers raise FormatError naming `line_no` on malformed input.
std::size_t parse_size(const std::string& field, std::size_t line_no);
double parse_real(const std::string& field, std::size_t line_no);

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

}  // namespace brownout
