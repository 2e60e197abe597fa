#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hbjm/errors.hpp"

namespace hbjm {

/// Minimal strict CSV reader: UTF-8, comma separated, one header row, no
/// quoting (the cohort files are purely numeric). Trailing carriage returns
/// are stripped so files written on other platforms load unchanged.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name, const std::string& file) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw format_error(file + ": missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("missing_file", path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::stringstream ss(line);
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw format_error(path + ": row has " + std::to_string(fields.size()) +
                                   " fields, expected " + std::to_string(table.header.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (first) throw format_error(path + ": empty file");
    return table;
}

inline double parse_double(const std::string& s, const std::string& where) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc() || result.ptr != end)
        throw format_error(where + ": cannot parse '" + s + "' as a number");
    return value;
}

inline long parse_long(const std::string& s, const std::string& where) {
    long value = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc() || result.ptr != end)
        throw format_error(where + ": cannot parse '" + s + "' as an integer");
    return value;
}

/// True when a hemoglobin field denotes a missing measurement.
inline bool is_missing_field(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

/// Shortest decimal form that parses back to the same double, so written
/// files are reproducible byte for byte.
inline std::string format_number(double v) {
    char buf[32];
    const auto result = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, result.ptr);
}

} // namespace hbjm
