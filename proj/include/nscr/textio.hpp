#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nscr {

// Shortest round-trip decimal form; keeps text outputs byte-stable.
std::string fmt_double(double v);
std::string fmt_int(long long v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

// Quotes a name for structured text files. Names may contain spaces but not
// quotes, backslashes or control characters.
std::string quote_name(std::string_view name);
bool valid_name(std::string_view name);

// Splits a line into tokens; quoted tokens may contain spaces.
std::vector<std::string> tokenize_line(std::string_view line);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

} // namespace nscr
