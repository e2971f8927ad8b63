#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace adaguide::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::vector<std::string> split(std::string_view line, char delimiter);
std::string join(const std::vector<std::string>& fields, char delimiter);

}  // namespace adaguide::text
