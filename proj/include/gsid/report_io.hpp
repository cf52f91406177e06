#pragma once
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <gsid/errors.hpp>
#include <gsid/experiments.hpp>
#include <gsid/series_io.hpp>

namespace gsid {

// ---------------------------------------------------------------- JSON

inline void to_json(nlohmann::json& j, const VariantOutcome& o)
{
    j = nlohmann::json{{"variant", to_string(o.variant)},
                       {"match", o.match},
                       {"supports", o.supports},
                       {"source_errors_pct", o.source_errors_pct},
                       {"component_errors_pct", o.component_errors_pct},
                       {"iterations", o.iterations},
                       {"converged", o.converged},
                       {"max_objective_increase", o.max_objective_increase}};
    if (!o.traces.empty()) j["traces"] = o.traces;
}

inline void from_json(const nlohmann::json& j, VariantOutcome& o)
{
    o.variant = parse_variant(j.at("variant").get<std::string>());
    j.at("match").get_to(o.match);
    j.at("supports").get_to(o.supports);
    j.at("source_errors_pct").get_to(o.source_errors_pct);
    j.at("component_errors_pct").get_to(o.component_errors_pct);
    j.at("iterations").get_to(o.iterations);
    j.at("converged").get_to(o.converged);
    j.at("max_objective_increase").get_to(o.max_objective_increase);
    o.traces.clear();
    if (j.contains("traces")) j.at("traces").get_to(o.traces);
}

inline void to_json(nlohmann::json& j, const TrialRecord& r)
{
    j = nlohmann::json{{"trial", r.trial}, {"seed", r.seed}, {"failed", r.failed}, {"outcomes", r.outcomes}};
    if (r.failed) j["failure"] = r.failure;
}

inline void from_json(const nlohmann::json& j, TrialRecord& r)
{
    j.at("trial").get_to(r.trial);
    j.at("seed").get_to(r.seed);
    j.at("failed").get_to(r.failed);
    r.failure = j.value("failure", std::string{});
    j.at("outcomes").get_to(r.outcomes);
}

inline void to_json(nlohmann::json& j, const VariantSummary& s)
{
    j = nlohmann::json{{"variant", to_string(s.variant)},
                       {"matches", s.matches},
                       {"P", s.recovery_probability},
                       {"mean_source_error_pct", s.mean_source_error_pct},
                       {"mean_rel_err_pct", s.mean_error_pct},
                       {"max_objective_increase", s.max_objective_increase}};
}

inline void from_json(const nlohmann::json& j, VariantSummary& s)
{
    s.variant = parse_variant(j.at("variant").get<std::string>());
    j.at("matches").get_to(s.matches);
    j.at("P").get_to(s.recovery_probability);
    j.at("mean_source_error_pct").get_to(s.mean_source_error_pct);
    j.at("mean_rel_err_pct").get_to(s.mean_error_pct);
    j.at("max_objective_increase").get_to(s.max_objective_increase);
}

inline void to_json(nlohmann::json& j, const ExperimentReport& r)
{
    j = nlohmann::json{{"name", r.name},
                       {"system", r.system},
                       {"N", r.trials},
                       {"base_seed", r.base_seed},
                       {"failed_trials", r.failed_trials},
                       {"summaries", r.summaries},
                       {"records", r.records}};
}

inline void from_json(const nlohmann::json& j, ExperimentReport& r)
{
    j.at("name").get_to(r.name);
    j.at("system").get_to(r.system);
    j.at("N").get_to(r.trials);
    j.at("base_seed").get_to(r.base_seed);
    j.at("failed_trials").get_to(r.failed_trials);
    j.at("summaries").get_to(r.summaries);
    j.at("records").get_to(r.records);
}

inline void to_json(nlohmann::json& j, const SegmentationReport& r)
{
    j = nlohmann::json{{"segments", r.segments},
                       {"t_switch", r.t_switch},
                       {"switch_segment", r.switch_segment},
                       {"true_switch_segment", r.true_switch_segment},
                       {"residuals", r.residuals},
                       {"component_residuals", r.component_residuals},
                       {"support", r.support},
                       {"group_support", r.group_support},
                       {"terms", r.terms},
                       {"coefficient_map", r.coefficient_map},
                       {"group_coefficient_map", r.group_coefficient_map},
                       {"regime", r.regime},
                       {"support_correct", r.support_correct},
                       {"max_rel_error_pct", r.max_rel_error_pct}};
}

inline void from_json(const nlohmann::json& j, SegmentationReport& r)
{
    j.at("segments").get_to(r.segments);
    j.at("t_switch").get_to(r.t_switch);
    j.at("switch_segment").get_to(r.switch_segment);
    j.at("true_switch_segment").get_to(r.true_switch_segment);
    j.at("residuals").get_to(r.residuals);
    j.at("component_residuals").get_to(r.component_residuals);
    j.at("support").get_to(r.support);
    j.at("group_support").get_to(r.group_support);
    j.at("terms").get_to(r.terms);
    j.at("coefficient_map").get_to(r.coefficient_map);
    j.at("group_coefficient_map").get_to(r.group_coefficient_map);
    j.at("regime").get_to(r.regime);
    j.at("support_correct").get_to(r.support_correct);
    j.at("max_rel_error_pct").get_to(r.max_rel_error_pct);
}

// ---------------------------------------------------------------- files

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(path.string() + ": cannot open for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw InputError(path.string() + ": write failed");
}

inline void prepare_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw InputError(dir.string() + ": cannot create output directory" + (ec ? " (" + ec.message() + ")" : ""));
    }
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path)
{
    auto out = open_output(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep)
{
    std::string out;
    for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? sep : "") + parts[k];
    return out;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

} // namespace detail

inline void write_table_csv(const FigureTable& table, const std::filesystem::path& path)
{
    auto out = detail::open_output(path);
    out << detail::join(table.columns, ",") << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_double(row[k]);
        out << '\n';
    }
    detail::finish(out, path);
}

/// Minimal SVG polyline / scatter plot of two table columns.
inline void write_svg_plot(const FigureTable& table, std::size_t xcol, std::size_t ycol, bool scatter,
                           const std::filesystem::path& path)
{
    constexpr double W = 640, H = 480, pad = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!table.rows.empty()) {
        xmin = xmax = table.rows.front()[xcol];
        ymin = ymax = table.rows.front()[ycol];
        for (const auto& r : table.rows) {
            xmin = std::min(xmin, r[xcol]);
            xmax = std::max(xmax, r[xcol]);
            ymin = std::min(ymin, r[ycol]);
            ymax = std::max(ymax, r[ycol]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad); };
    auto py = [&](double y) { return H - pad - (y - ymin) / (ymax - ymin) * (H - 2 * pad); };

    auto out = detail::open_output(path);
    char buf[128];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << table.name << "</text>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << table.columns[xcol] << "</text>\n";
    out << "<text x=\"12\" y=\"" << H / 2 << "\" font-size=\"12\">" << table.columns[ycol] << "</text>\n";
    out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\"" << H - 2 * pad
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (scatter) {
        for (const auto& r : table.rows) {
            std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\"/>\n", px(r[xcol]), py(r[ycol]));
            out << buf;
        }
    } else {
        out << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
        for (const auto& r : table.rows) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(r[xcol]), py(r[ycol]));
            out << buf;
        }
        out << "\"/>\n";
    }
    out << "</svg>\n";
    detail::finish(out, path);
}

inline void write_summary_csv(const ExperimentReport& report, const std::filesystem::path& path)
{
    auto out = detail::open_output(path);
    std::size_t m = 0;
    for (const auto& s : report.summaries) m = std::max(m, s.mean_source_error_pct.size());
    out << "variant,P,mean_rel_err_pct,matches,N,failed_trials";
    for (std::size_t i = 0; i < m; ++i) out << ",mean_rel_err_pct_source" << i + 1;
    out << '\n';
    for (const auto& s : report.summaries) {
        out << to_string(s.variant) << ',' << format_double(s.recovery_probability) << ','
            << format_double(s.mean_error_pct) << ',' << s.matches << ',' << report.trials << ','
            << report.failed_trials;
        for (std::size_t i = 0; i < m; ++i) {
            out << ',' << (i < s.mean_source_error_pct.size() ? format_double(s.mean_source_error_pct[i]) : "");
        }
        out << '\n';
    }
    detail::finish(out, path);
}

inline void write_coefficient_table_csv(const CoefficientTable& table, const std::filesystem::path& path)
{
    auto out = detail::open_output(path);
    const auto sets = table.estimated.cols();
    out << "term";
    for (Eigen::Index i = 0; i < sets; ++i) out << ",set_" << i + 1;
    for (Eigen::Index i = 0; i < sets; ++i) out << ",true_" << i + 1;
    out << '\n';
    for (std::size_t k = 0; k < table.terms.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        out << table.terms[k];
        for (Eigen::Index i = 0; i < sets; ++i) out << ',' << format_double(table.estimated(r, i));
        for (Eigen::Index i = 0; i < sets; ++i) out << ',' << format_double(table.truth(r, i));
        out << '\n';
    }
    detail::finish(out, path);
}

/// Human-readable table: nonzero rows only, 4 decimals, truth (if any) in parentheses.
inline std::string format_coefficient_table(const CoefficientTable& table)
{
    std::ostringstream os;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-10s", "term");
    os << buf;
    for (Eigen::Index i = 0; i < table.estimated.cols(); ++i) {
        std::snprintf(buf, sizeof(buf), " %22s", ("set " + std::to_string(i + 1)).c_str());
        os << buf;
    }
    os << '\n';
    for (std::size_t k = 0; k < table.terms.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        const bool with_truth = table.truth.size() > 0;
        if (table.estimated.row(r).isZero(0.0) && (!with_truth || table.truth.row(r).isZero(0.0))) continue;
        std::snprintf(buf, sizeof(buf), "%-10s", table.terms[k].c_str());
        os << buf;
        for (Eigen::Index i = 0; i < table.estimated.cols(); ++i) {
            char cell[64];
            if (with_truth) std::snprintf(cell, sizeof(cell), "%.4f (%g)", table.estimated(r, i), table.truth(r, i));
            else std::snprintf(cell, sizeof(cell), "%.4f", table.estimated(r, i));
            std::snprintf(buf, sizeof(buf), " %22s", cell);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

/// report.json, summary.csv and figure-data CSVs (plus SVGs when `svg`).
inline void emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                        const std::vector<FigureTable>& figures = {}, bool svg = false)
{
    detail::prepare_directory(dir);
    detail::write_json(nlohmann::json(report), dir / "report.json");
    write_summary_csv(report, dir / "summary.csv");
    for (const auto& fig : figures) {
        write_table_csv(fig, dir / (fig.name + ".csv"));
        if (svg && fig.columns.size() >= 2) {
            const std::size_t ycol = fig.columns.size() >= 3 ? 2 : 1;
            const std::size_t xcol = fig.columns.size() >= 3 ? 1 : 0;
            write_svg_plot(fig, xcol, ycol, false, dir / (fig.name + ".svg"));
        }
    }
}

inline void emit_report(const ExperimentOutput& output, const std::filesystem::path& dir, bool svg = false)
{
    emit_report(output.report, dir, output.figures, svg);
}

inline ExperimentReport read_report_json(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": cannot open");
    try {
        return nlohmann::json::parse(in).get<ExperimentReport>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

/// Segmentation outputs: report.json, summary.csv, segment_residuals.csv,
/// coefficient_map.csv (segment x term) and an optional SVG.
inline void emit_segmentation(const SegmentationReport& report, const std::filesystem::path& dir,
                              const std::vector<FigureTable>& figures = {}, bool svg = false)
{
    detail::prepare_directory(dir);
    detail::write_json(nlohmann::json(report), dir / "report.json");
    {
        const auto path = dir / "summary.csv";
        auto out = detail::open_output(path);
        const auto refs = std::count(report.support_correct.begin(), report.support_correct.end(), true);
        double worst = 0.0;
        for (double e : report.max_rel_error_pct) worst = std::max(worst, e);
        out << "segments,switch_segment,true_switch_segment,t_switch,segments_with_correct_support,max_rel_err_pct,support\n";
        out << report.segments << ',' << report.switch_segment << ',' << report.true_switch_segment << ','
            << format_double(report.t_switch) << ',' << refs << ',' << format_double(worst) << ','
            << detail::csv_field(detail::join(report.support.size() > 1 ? report.support[1] : std::vector<std::string>{}, " "))
            << '\n';
        detail::finish(out, path);
    }

    FigureTable residuals{"segment_residuals", {"segment", "residual"}, {}};
    for (std::size_t j = 0; j < report.component_residuals.size(); ++j) {
        residuals.columns.push_back("residual_x" + std::to_string(j + 1));
    }
    for (std::size_t i = 0; i < report.residuals.size(); ++i) {
        std::vector<double> row{static_cast<double>(i + 1), report.residuals[i]};
        for (const auto& comp : report.component_residuals) row.push_back(comp[i]);
        residuals.rows.push_back(std::move(row));
    }
    write_table_csv(residuals, dir / "segment_residuals.csv");

    FigureTable map{"coefficient_map", {"segment", "term_index", "value", "group_value"}, {}};
    for (std::size_t i = 0; i < report.coefficient_map.size(); ++i) {
        for (std::size_t k = 0; k < report.coefficient_map[i].size(); ++k) {
            map.rows.push_back({static_cast<double>(i + 1), static_cast<double>(k + 1), report.coefficient_map[i][k],
                                report.group_coefficient_map[i][k]});
        }
    }
    write_table_csv(map, dir / "coefficient_map.csv");
    {
        const auto path = dir / "terms.csv";
        auto out = detail::open_output(path);
        out << "term_index,term\n";
        for (std::size_t k = 0; k < report.terms.size(); ++k) out << k + 1 << ',' << report.terms[k] << '\n';
        detail::finish(out, path);
    }
    for (const auto& fig : figures) write_table_csv(fig, dir / (fig.name + ".csv"));
    if (svg) {
        write_svg_plot(residuals, 0, 1, true, dir / "segment_residuals.svg");
        FigureTable nonzero{"coefficient_map (nonzero)", {"segment", "term_index"}, {}};
        for (const auto& r : map.rows) {
            if (r[2] != 0.0) nonzero.rows.push_back({r[0], r[1]});
        }
        write_svg_plot(nonzero, 0, 1, true, dir / "coefficient_map.svg");
        for (const auto& fig : figures) {
            if (fig.columns.size() >= 3) write_svg_plot(fig, 1, 2, false, dir / (fig.name + ".svg"));
        }
    }
}

} // namespace gsid
