#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "specgeo/error.hpp"

namespace specgeo {

/// Shortest decimal string that parses back to exactly `x`. Non-finite
/// values print as "nan", "inf" and "-inf".
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double x = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, x);
    if (res.ec != std::errc{} || res.ptr != end) fail(Errc::schema, "not a number: '" + std::string(s) + "'");
    return x;
}

/// Minimal CSV writer: comma separated, '\n' line endings, fields quoted only
/// when they contain a comma, quote or newline.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : ncols_(header.size()) { write_row(header); }

    void row(const std::vector<std::string>& fields) {
        require(fields.size() == ncols_, Errc::invalid_argument, "csv row width differs from header");
        write_row(fields);
    }

    const std::string& str() const noexcept { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::io, "cannot write " + path.string());
        out << buf_;
    }

private:
    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) buf_ += ',';
            const auto& f = fields[i];
            if (f.find_first_of(",\"\n\r") == std::string::npos) {
                buf_ += f;
            } else {
                buf_ += '"';
                for (char c : f) {
                    if (c == '"') buf_ += '"';
                    buf_ += c;
                }
                buf_ += '"';
            }
        }
        buf_ += '\n';
    }

    std::size_t ncols_;
    std::string buf_;
};

/// Parse CSV text into rows of fields (RFC 4180 quoting, LF or CRLF).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) fail(Errc::schema, "unterminated quoted csv field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out << text;
}

} // namespace specgeo
