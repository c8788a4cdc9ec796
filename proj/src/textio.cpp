#include "nscr/textio.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "nscr/error.hpp"

namespace nscr {

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_int(long long v) { return std::to_string(v); }

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("bad number: '" + std::string(s) + "'");
    return v;
}

long long parse_int(std::string_view s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw DataError("bad integer: '" + std::string(s) + "'");
    return v;
}

bool valid_name(std::string_view name) {
    if (name.empty()) return false;
    for (unsigned char c : name) {
        if (c == '"' || c == '\\' || c < 0x20) return false;
    }
    return true;
}

std::string quote_name(std::string_view name) {
    if (!valid_name(name)) throw DataError("invalid name: '" + std::string(name) + "'");
    return "\"" + std::string(name) + "\"";
}

std::vector<std::string> tokenize_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line[i] == '"') {
            const std::size_t end = line.find('"', i + 1);
            if (end == std::string_view::npos) throw DataError("unterminated quote in line");
            out.emplace_back(line.substr(i + 1, end - i - 1));
            i = end + 1;
        } else {
            std::size_t end = i;
            while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
            out.emplace_back(line.substr(i, end - i));
            i = end;
        }
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("write failed: " + path);
}

} // namespace nscr
