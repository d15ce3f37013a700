// csv.hpp - minimal comma-separated tables (no quoting; fields never contain
// commas) with shortest round-trip number formatting.
#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "randtrial/errors.hpp"

namespace randtrial::csv {

inline std::string format(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format(std::uint64_t v) { return std::to_string(v); }

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, std::size_t, std::less<>> column;

    /// Index of a required column; the error names it.
    std::size_t require(std::string_view name) const {
        const auto it = column.find(name);
        if (it == column.end()) throw InvalidInput("CSV is missing required column '" + std::string(name) + "'");
        return it->second;
    }

    double number(std::size_t row, std::size_t col) const {
        const auto& text = rows[row][col];
        double v = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
            throw InvalidInput("CSV row " + std::to_string(row + 2) + ", column '" + header[col] +
                               "': not a number: '" + text + "'");
        return v;
    }
};

inline Table read(std::istream& is) {
    Table t;
    std::string line;
    if (!std::getline(is, line)) throw InvalidInput("CSV is empty (no header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    for (std::size_t i = 0; i < t.header.size(); ++i) t.column.emplace(t.header[i], i);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (fields.size() != t.header.size())
            throw InvalidInput("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                               " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << fields[i];
    }
    os << '\n';
}

}  // namespace randtrial::csv
