#pragma once
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include <gsid/core_model.hpp>
#include <gsid/errors.hpp>

namespace gsid {

/// Shortest-exact formatting used for every double written to a file (17 significant digits).
inline std::string format_double(double value)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

/// Writes `t,x1,...,xn` with one row per sample.
inline void write_series_csv(std::ostream& os, const SourceSeries& series)
{
    os << 't';
    for (int d = 0; d < series.dimension(); ++d) os << ",x" << d + 1;
    os << '\n';
    for (Eigen::Index k = 0; k < series.length(); ++k) {
        os << format_double(series.times()[static_cast<std::size_t>(k)]);
        for (int d = 0; d < series.dimension(); ++d) os << ',' << format_double(series.states()(k, d));
        os << '\n';
    }
}

inline void write_series_csv(const std::filesystem::path& path, const SourceSeries& series)
{
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path.string() + " for writing");
    write_series_csv(os, series);
    if (!os) throw InputError("failed writing " + path.string());
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    for (auto& field : out) {
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    }
    return out;
}

inline double parse_double(std::string_view field, const std::string& where)
{
    double value = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) throw InputError(where + ": cannot parse '" + std::string(field) + "'");
    return value;
}

} // namespace detail

/// Parses a `t,x1,...,xn` CSV; dt is inferred from the first and last times.
inline SourceSeries read_series_csv(std::istream& is, const std::string& name = "<stream>", int source_id = 1)
{
    std::string line;
    if (!std::getline(is, line)) throw InputError(name + ": empty file");
    const auto header = detail::split_commas(line);
    if (header.size() < 2 || header[0] != "t") throw InputError(name + ": header must be t,x1,...,xn");
    const int n = static_cast<int>(header.size()) - 1;
    for (int d = 0; d < n; ++d) {
        if (header[static_cast<std::size_t>(d) + 1] != "x" + std::to_string(d + 1)) {
            throw InputError(name + ": header column " + std::to_string(d + 2) + " must be x" + std::to_string(d + 1));
        }
    }

    std::vector<double> times;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_commas(line);
        const std::string where = name + ":" + std::to_string(line_no);
        if (fields.size() != header.size()) throw InputError(where + ": expected " + std::to_string(header.size()) + " fields");
        times.push_back(detail::parse_double(fields[0], where));
        for (int d = 0; d < n; ++d) values.push_back(detail::parse_double(fields[static_cast<std::size_t>(d) + 1], where));
    }
    if (times.size() < 3) throw InputError(name + ": need at least 3 samples");

    Eigen::MatrixXd states(static_cast<Eigen::Index>(times.size()), n);
    for (Eigen::Index k = 0; k < states.rows(); ++k) {
        for (int d = 0; d < n; ++d) states(k, d) = values[static_cast<std::size_t>(k * n + d)];
    }
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    try {
        return SourceSeries(dt, std::move(times), std::move(states), source_id);
    } catch (const StructuralError& e) {
        throw InputError(name + ": " + e.what());
    }
}

inline SourceSeries read_series_csv(const std::filesystem::path& path, int source_id = 1)
{
    std::ifstream is(path);
    if (!is) throw InputError("cannot open " + path.string());
    return read_series_csv(is, path.string(), source_id);
}

} // namespace gsid
