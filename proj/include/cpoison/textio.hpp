#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cpoison {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

// Strict whole-token parses; throw ParseError (with `line` when nonzero).
double parse_double(std::string_view token, std::size_t line = 0);
std::uint64_t parse_uint(std::string_view token, std::size_t line = 0);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
// Splits on runs of spaces/tabs and/or commas.
std::vector<std::string_view> split_fields(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace cpoison
