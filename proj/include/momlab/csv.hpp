#pragma once

// Minimal CSV reading/writing. Floats are written with 17 significant digits
// so values round-trip exactly.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "momlab/errors.hpp"

namespace momlab::csv {

inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Empty cell for absent observables.
inline std::string fmt_opt(double x, bool present) { return present ? fmt(x) : std::string(); }

inline std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out;
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    int require_column(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw FormatError("missing column '" + name + "'");
        return c;
    }
    double number(std::size_t row, int col) const {
        const std::string& s = rows.at(row).at(static_cast<std::size_t>(col));
        if (s.empty()) return std::nan("");
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw FormatError("trailing characters in '" + s + "'");
            return v;
        } catch (const std::invalid_argument&) {
            if (s == "nan") return std::nan("");
            throw FormatError("not a number: '" + s + "' (row " + std::to_string(row + 2) + ")");
        } catch (const std::out_of_range&) {
            throw FormatError("number out of range: '" + s + "'");
        }
    }
};

inline Table parse(std::istream& in) {
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            t.header = split(line);
            first = false;
            continue;
        }
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw FormatError("row " + std::to_string(t.rows.size() + 2) + " has " +
                              std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (first) throw FormatError("empty CSV (no header)");
    return t;
}

inline Table parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return parse(in);
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << content;
}

}  // namespace momlab::csv
