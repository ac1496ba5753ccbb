#pragma once

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "kalikow/types.hpp"

namespace kalikow {

// Small parsing helpers shared by the file formats. Parse failures raise
// ConfigError with the offending text.

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits on `delim`, trims each piece and drops empty ones.
inline std::vector<std::string> split_list(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(delim, start);
        if (end == std::string_view::npos) end = s.size();
        auto piece = trim(s.substr(start, end - start));
        if (!piece.empty()) out.push_back(std::move(piece));
        start = end + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
        const auto b = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != ',') ++i;
        if (i > b) out.emplace_back(s.substr(b, i - b));
    }
    return out;
}

inline double parse_double(const std::string& s) {
    const auto t = trim(s);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
        throw ConfigError("not a number: '" + s + "'");
    }
    return v;
}

inline std::int64_t parse_int(const std::string& s) {
    const auto t = trim(s);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
        throw ConfigError("not an integer: '" + s + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& s) {
    const auto t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("not a boolean: '" + s + "'");
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace kalikow
