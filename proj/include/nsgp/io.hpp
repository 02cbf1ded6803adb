#ifndef NSGP_IO_HPP
#define NSGP_IO_HPP

// CSV ensembles (header x1,...,xp[,y]), shortest round-trip number formatting, atomic file
// writes and content hashes for manifests.

#include "nsgp/core.hpp"
#include "nsgp/design.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace nsgp::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write to a sibling temporary file, then rename over the target.
inline void atomic_write(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArgumentError("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw ArgumentError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw ArgumentError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t k = line.find(',', start);
        out.push_back(trim(line.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start)));
        if (k == std::string_view::npos) break;
        start = k + 1;
    }
    return out;
}

inline std::optional<double> parse_number(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (r.ec != std::errc() || r.ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

struct EnsembleFile {
    std::vector<std::string> columns;
    Matrix X;
    Vector y;
    bool has_response = false;

    Eigen::Index size() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }
};

/// Parse `x1,...,xp[,y]` CSV text. `source` names the input in error messages; `response` is
/// the name of the optional trailing column.
inline EnsembleFile parse_ensemble_csv(std::string_view text, const std::string& source = "<input>",
                                       std::string_view response = "y") {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t k = text.find('\n', start);
        std::string_view line = text.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start);
        lines.push_back(line);
        if (k == std::string_view::npos) break;
        start = k + 1;
    }
    while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ParseError(source + ": empty file");

    EnsembleFile out;
    const auto header = detail::split_commas(lines.front());
    const std::size_t ncol = header.size();
    std::size_t p = ncol;
    if (detail::trim(header.back()) == response) {
        out.has_response = true;
        p = ncol - 1;
    }
    if (p < 1) throw ParseError(source + ": header needs at least one input column x1");
    for (std::size_t j = 0; j < p; ++j) {
        const std::string expected = "x" + std::to_string(j + 1);
        if (header[j] != expected)
            throw ParseError(source + ": header column " + std::to_string(j + 1) + " is '" + std::string(header[j]) +
                             "', expected '" + expected + "'");
    }
    for (std::size_t j = 0; j < ncol; ++j) out.columns.emplace_back(header[j]);

    std::vector<std::vector<double>> rows;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t row = li;
        if (detail::trim(lines[li]).empty())
            throw ParseError(source + ": row " + std::to_string(row) + " (line " + std::to_string(li + 1) + ") is empty");
        const auto cells = detail::split_commas(lines[li]);
        if (cells.size() != ncol)
            throw ParseError(source + ": row " + std::to_string(row) + " (line " + std::to_string(li + 1) + ") has " +
                             std::to_string(cells.size()) + " fields, expected " + std::to_string(ncol));
        std::vector<double> vals(ncol);
        for (std::size_t j = 0; j < ncol; ++j) {
            auto v = detail::parse_number(cells[j]);
            if (!v)
                throw ParseError(source + ": row " + std::to_string(row) + ", column " + std::to_string(j + 1) + " ('" +
                                 out.columns[j] + "'): '" + std::string(cells[j]) + "' is not a finite number");
            vals[j] = *v;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ParseError(source + ": no data rows");

    const auto n = static_cast<Eigen::Index>(rows.size());
    out.X.resize(n, static_cast<Eigen::Index>(p));
    if (out.has_response) out.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < p; ++j) out.X(i, static_cast<Eigen::Index>(j)) = r[j];
        if (out.has_response) out.y(i) = r[p];
    }
    return out;
}

inline EnsembleFile read_ensemble_csv(const fs::path& path, std::string_view response = "y") {
    if (!fs::exists(path)) throw ArgumentError("file not found: '" + path.string() + "'");
    return parse_ensemble_csv(read_file(path), path.string(), response);
}

struct LoadedEnsemble {
    EnsembleFile file;
    Standardizer standardizer;
    Ensemble ensemble;
};

/// Read and standardize. Inputs map to [-1, 1] using the declared ranges (or the observed
/// column min/max); the response is centred and scaled.
inline LoadedEnsemble load_ensemble(const fs::path& path, const std::optional<std::pair<Vector, Vector>>& ranges = std::nullopt) {
    LoadedEnsemble le;
    le.file = read_ensemble_csv(path);
    if (!le.file.has_response) throw ParseError(path.string() + ": header has no response column 'y'");
    if (ranges && (ranges->first.size() != le.file.dim() || ranges->second.size() != le.file.dim()))
        throw ArgumentError("declared input ranges have " + std::to_string(ranges->first.size()) +
                            " entries, ensemble has " + std::to_string(le.file.dim()) + " inputs");
    auto [s, e] = standardize(le.file.X, le.file.y, ranges);
    le.standardizer = std::move(s);
    le.ensemble = std::move(e);
    return le;
}

/// CSV text with a header line and one row per matrix row.
inline std::string csv_text(const std::vector<std::string>& header, const Matrix& rows) {
    if (static_cast<Eigen::Index>(header.size()) != rows.cols()) throw ArgumentError("csv: header width mismatch");
    std::string s;
    for (std::size_t j = 0; j < header.size(); ++j) s += (j ? "," : "") + header[j];
    s += '\n';
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            if (j) s += ',';
            s += format_double(rows(i, j));
        }
        s += '\n';
    }
    return s;
}

inline std::vector<std::string> input_header(Eigen::Index p) {
    std::vector<std::string> h;
    for (Eigen::Index j = 0; j < p; ++j) h.push_back("x" + std::to_string(j + 1));
    return h;
}

}  // namespace nsgp::io

#endif  // NSGP_IO_HPP
