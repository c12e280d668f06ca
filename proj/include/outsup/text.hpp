#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace outsup::text {

// Shortest decimal that parses back to the same double.
std::string shortest(double x);
// 17 significant digits ("%.17g"), the CSV convention.
std::string sig17(double x);

std::string_view trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Strict numeric parsing; throws ConstructionError naming `what`.
double parse_real(std::string_view s, std::string_view what);
std::size_t parse_index(std::string_view s, std::string_view what);

}  // namespace outsup::text
