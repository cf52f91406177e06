#pragma once
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <gsid/config_io.hpp>
#include <gsid/diagnostics.hpp>
#include <gsid/dynamics.hpp>
#include <gsid/errors.hpp>
#include <gsid/experiments.hpp>
#include <gsid/identification.hpp>
#include <gsid/report_io.hpp>
#include <gsid/series_io.hpp>

namespace gsid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Usage problems detected after argument parsing.
class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// "-8,7,27" -> {-8, 7, 27}
inline std::vector<double> parse_list(const std::string& text, const std::string& flag)
{
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto next = text.find(',', pos);
        const auto piece = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        double v = 0.0;
        const auto* first = piece.data();
        const auto* last = piece.data() + piece.size();
        if (!piece.empty() && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (piece.empty() || ec != std::errc{} || ptr != last) {
            throw UsageError(flag + ": cannot parse '" + piece + "' as a number");
        }
        out.push_back(v);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

struct SimulateArgs
{
    std::string system;
    std::optional<double> alpha, beta, delta, alpha_before, alpha_after, t_switch;
    std::string x0;
    double dt = 0.005;
    std::optional<double> t_final;
    std::string output;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out)
{
    if (a.output.empty()) throw UsageError("simulate: -o/--output is required");
    if (!a.t_final) throw UsageError("simulate: --t-final is required");
    auto need = [&](const std::optional<double>& v, const std::string& flag) {
        if (!v) throw UsageError("simulate " + a.system + ": " + flag + " is required");
        return *v;
    };
    std::optional<SourceSeries> series;
    std::vector<double> x0;
    if (!a.x0.empty()) x0 = parse_list(a.x0, "--x0");
    auto initial = [&](std::size_t n) {
        if (x0.size() != n) throw UsageError("--x0: expected " + std::to_string(n) + " comma-separated values");
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(n)));
    };

    if (a.system == "logistic") {
        series = integrate(logistic(need(a.alpha, "--alpha")), initial(1), a.dt, *a.t_final);
    } else if (a.system == "lorenz") {
        series = integrate(lorenz(need(a.alpha, "--alpha")), initial(3), a.dt, *a.t_final);
    } else if (a.system == "duffing") {
        series = integrate(duffing(need(a.beta, "--beta"), need(a.delta, "--delta")), initial(2), a.dt, *a.t_final);
    } else if (a.system == "switching") {
        const double ab = need(a.alpha_before, "--alpha-before");
        const double aa = need(a.alpha_after, "--alpha-after");
        const double ts = a.t_switch.value_or(16.5 / 32.0 * *a.t_final);
        series = simulate_switching(ab, aa, initial(3), a.dt, ts, *a.t_final);
    } else {
        throw UsageError("simulate: unknown system '" + a.system + "' (logistic, lorenz, duffing, switching)");
    }
    write_series_csv(std::filesystem::path(a.output), *series);
    out << "wrote " << series->length() << " rows to " << a.output << "\nfinal state:";
    const auto last = series->states().row(series->length() - 1);
    for (Eigen::Index d = 0; d < last.size(); ++d) out << ' ' << format_double(last(d));
    out << '\n';
    return kExitOk;
}

struct IdentifyArgs
{
    std::vector<std::string> inputs;
    int degree = 2;
    double threshold = 0.0;
    std::string variant = "group-l20";
    std::string init = "zero";
    double tol = 1e-8;
    int max_iter = 500;
    int sparsity = 0;
    double k_factor = 2.0;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::string output = "model.json";
    std::string trace_dir;
};

inline std::vector<SourceSeries> read_inputs(const std::vector<std::string>& inputs)
{
    std::vector<SourceSeries> series;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        series.push_back(read_series_csv(std::filesystem::path(inputs[i]), static_cast<int>(i) + 1));
        if (series.back().dimension() != series.front().dimension()) {
            throw InputError(inputs[i] + ": has " + std::to_string(series.back().dimension()) + " state columns, " +
                             inputs.front() + " has " + std::to_string(series.front().dimension()));
        }
    }
    return series;
}

inline int cmd_identify(const IdentifyArgs& a, std::ostream& out, std::ostream& err)
{
    SolverConfig solver;
    try {
        solver.threshold = a.threshold;
        solver.tol = a.tol;
        solver.max_iter = a.max_iter;
        solver.variant = parse_variant(a.variant);
        solver.init = parse_initialization(a.init);
        solver.k_factor = a.k_factor;
        if (a.sparsity > 0) solver.sparsity = a.sparsity;
        solver.validate();
    } catch (const StructuralError& e) {
        throw UsageError(std::string("identify: ") + e.what());
    }
    if (a.degree < 0) throw UsageError("identify: --degree must be >= 0");
    if (a.noise < 0) throw UsageError("identify: --noise must be >= 0");

    const auto series = read_inputs(a.inputs);
    const auto prepared = prepare_sources(series, a.degree, std::vector<double>(series.size(), a.noise), a.seed);
    const auto model = identify(prepared, solver);

    for (std::size_t i = 0; i < model.sources(); ++i) {
        out << "source " << i + 1 << " (" << a.inputs[i] << ")\n";
        for (int j = 0; j < prepared.dimension(); ++j) {
            out << "  " << equation_string(model, j, static_cast<Eigen::Index>(i)) << '\n';
        }
    }
    if (model.sources() > 1) {
        for (const auto& cm : model.components) {
            CoefficientTable t;
            for (const auto& alpha : model.spec.multi_indices) t.terms.push_back(term_name(alpha));
            t.estimated = cm.coefficients.values();
            out << "\ncomponent " << cm.component + 1 << " coefficients\n" << format_coefficient_table(t);
        }
    }
    for (const auto& cm : model.components) {
        if (cm.coefficients.support().empty()) {
            err << "warning: component " << cm.component + 1 << " has an all-zero support\n";
        }
        if (cm.rank_warning) err << "warning: component " << cm.component + 1 << " hit a rank-deficient restricted solve\n";
        if (!cm.converged) err << "warning: component " << cm.component + 1 << " did not converge within max_iter\n";
    }

    const std::filesystem::path path(a.output);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError(a.output + ": cannot open for writing");
    auto j = model_to_json(model);
    j["solver"] = {{"threshold", solver.threshold},
                   {"tol", solver.tol},
                   {"max_iter", solver.max_iter},
                   {"variant", to_string(solver.variant)},
                   {"init", to_string(solver.init)}};
    j["inputs"] = a.inputs;
    j["scale_factor"] = prepared.scale_factor;
    file << j.dump(2) << '\n';
    if (!file) throw InputError(a.output + ": write failed");
    out << "wrote " << a.output << '\n';

    if (!a.trace_dir.empty()) {
        const std::filesystem::path dir(a.trace_dir);
        std::filesystem::create_directories(dir);
        for (const auto& cm : model.components) {
            const auto tpath = dir / ("trace_x" + std::to_string(cm.component + 1) + ".csv");
            std::ofstream tf(tpath, std::ios::binary);
            if (!tf) throw InputError(tpath.string() + ": cannot open for writing");
            tf << "iteration,F\n";
            for (std::size_t k = 0; k < cm.objective_trace.size(); ++k) {
                tf << k << ',' << format_double(cm.objective_trace[k]) << '\n';
            }
        }
    }
    return kExitOk;
}

struct ExperimentArgs
{
    std::string config;
    std::string output;
    std::optional<int> trials;
    std::optional<int> threads;
    bool svg = false;
};

inline int cmd_experiment(const ExperimentArgs& a, std::ostream& out, std::ostream& err)
{
    auto file = load_experiment(std::filesystem::path(a.config));
    const std::filesystem::path dir = a.output.empty() ? std::filesystem::path(file.output) : std::filesystem::path(a.output);
    const bool svg = a.svg || file.svg;

    if (file.kind == ExperimentKind::Switching) {
        const auto report = switching_experiment(file.switching);
        const auto& sw = file.switching;
        const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(sw.x0.data(), 3);
        const auto series = simulate_switching(sw.alpha_before, sw.alpha_after, x0, sw.dt, sw.switch_time(), sw.t_final);
        FigureTable states{"state_space", {"t", "x1", "x2", "x3"}, {}};
        for (Eigen::Index k = 0; k < series.length(); ++k) {
            states.rows.push_back({series.times()[static_cast<std::size_t>(k)], series.states()(k, 0), series.states()(k, 1),
                                   series.states()(k, 2)});
        }
        emit_segmentation(report, dir, {states}, svg);
        out << "switch segment: " << report.switch_segment << " (true: " << report.true_switch_segment << ")\n";
        for (std::size_t j = 0; j < report.support.size(); ++j) {
            out << "support x" << j + 1 << ": " << detail::join(report.support[j], ", ") << '\n';
        }
        out << "wrote " << dir.string() << '\n';
        return kExitOk;
    }

    auto& config = file.trials;
    if (a.trials) config.trials = *a.trials;
    if (a.threads) config.threads = *a.threads;
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(a.config + ": " + e.what());
    }

    ExperimentOutput output;
    if (file.kind == ExperimentKind::LorenzRegimes) {
        auto result = lorenz_regimes_experiment(config);
        output = std::move(result.output);
        detail::prepare_directory(dir);
        if (!result.table.terms.empty()) {
            write_coefficient_table_csv(result.table, dir / "component2_coefficients.csv");
            out << "component 2 coefficients, trial 1\n" << format_coefficient_table(result.table);
        }
    } else {
        output = run_experiment(config);
    }
    emit_report(output, dir, svg);

    const auto& report = output.report;
    for (const auto& s : report.summaries) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-14s P = %.4f  mean rel. error = %.4f%%\n", to_string(s.variant).c_str(),
                      s.recovery_probability, s.mean_error_pct);
        out << buf;
    }
    out << "wrote " << dir.string() << '\n';
    if (report.failed_trials > 0) {
        err << report.failed_trials << " of " << report.trials << " trials failed (see report.json)\n";
        return kExitRuntime;
    }
    return kExitOk;
}

struct DiagnoseArgs
{
    std::vector<std::string> inputs;
    int degree = 2;
    double tolerance = 1e-8;
    std::string output;
};

inline int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out)
{
    if (a.degree < 0) throw UsageError("diagnose: --degree must be >= 0");
    if (!(a.tolerance > 0)) throw UsageError("diagnose: --tol must be positive");
    const auto series = read_inputs(a.inputs);
    const auto spec = enumerate_monomials(series.front().dimension(), a.degree);
    std::vector<Eigen::MatrixXd> dictionaries;
    for (const auto& s : series) dictionaries.push_back(build_dictionary(s.states(), spec));
    const auto report = degeneracy_warning(dictionaries, spec, a.tolerance);

    nlohmann::json j = report;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) j["sources"][i]["input"] = a.inputs[i];
    if (!a.output.empty()) {
        std::ofstream f(a.output, std::ios::binary);
        if (!f) throw InputError(a.output + ": cannot open for writing");
        f << j.dump(2) << '\n';
        if (!f) throw InputError(a.output + ": write failed");
    } else {
        out << j.dump(2) << '\n';
    }
    for (std::size_t i = 0; i < report.sources.size(); ++i) {
        const auto& s = report.sources[i];
        if (!s.full_rank) out << "source " << s.source << " (" << a.inputs[i] << "): dictionary is rank deficient\n";
        for (const auto& f : s.flags) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3e", f.ratio);
            out << "source " << s.source << " (" << a.inputs[i] << "): degree-" << f.degree
                << " degeneracy, sigma ratio " << buf << '\n';
        }
    }
    if (!report.any_flagged()) out << "no flags\n";
    return kExitOk;
}

/// Entry point; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"gsid: multi-source sparse identification of polynomial ODEs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "gsid 1.0.0");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "integrate a system and write its trajectory CSV");
    s->add_option("system", sim.system, "logistic | lorenz | duffing | switching")->required();
    s->add_option("--alpha", sim.alpha, "bifurcation parameter (logistic, lorenz)");
    s->add_option("--beta", sim.beta, "Duffing stiffness");
    s->add_option("--delta", sim.delta, "Duffing damping");
    s->add_option("--alpha-before", sim.alpha_before, "switching: alpha before the switch");
    s->add_option("--alpha-after", sim.alpha_after, "switching: alpha after the switch");
    s->add_option("--t-switch", sim.t_switch, "switching: switch time (default 16.5/32 of t-final)");
    s->add_option("--x0", sim.x0, "initial state, comma separated")->required()->allow_extra_args(false);
    s->add_option("--dt", sim.dt, "time step")->capture_default_str();
    s->add_option("--t-final", sim.t_final, "final time");
    s->add_option("-o,--output", sim.output, "output CSV");

    IdentifyArgs id;
    auto* i = app.add_subcommand("identify", "identify a shared sparse model from trajectory CSVs (one per source)");
    i->add_option("inputs", id.inputs, "trajectory CSVs")->required()->check(CLI::ExistingFile);
    i->add_option("-p,--degree", id.degree, "dictionary degree")->capture_default_str();
    i->add_option("-a,--threshold", id.threshold, "row threshold a (gamma = a^2)")->required();
    i->add_option("--variant", id.variant, "group-l20 | per-source-l0 | ks-rows")->capture_default_str();
    i->add_option("--init", id.init, "zero | least-squares")->capture_default_str();
    i->add_option("--tol", id.tol, "stopping tolerance")->capture_default_str();
    i->add_option("--max-iter", id.max_iter, "iteration cap")->capture_default_str();
    i->add_option("--sparsity", id.sparsity, "s for ks-rows");
    i->add_option("--k-factor", id.k_factor, "k for ks-rows")->capture_default_str();
    i->add_option("--seed", id.seed, "noise seed")->capture_default_str();
    i->add_option("--noise", id.noise, "relative velocity noise")->capture_default_str();
    i->add_option("-o,--output", id.output, "model JSON")->capture_default_str();
    i->add_option("--trace-dir", id.trace_dir, "write per-component objective traces here");

    ExperimentArgs ex;
    auto* e = app.add_subcommand("experiment", "run an experiment described by a config file");
    e->add_option("config", ex.config, "experiment config (.cfg)")->required()->check(CLI::ExistingFile);
    e->add_option("-o,--output", ex.output, "output directory (overrides the config)");
    e->add_option("--trials", ex.trials, "override the trial count");
    e->add_option("--threads", ex.threads, "worker threads (0: all cores)");
    e->add_flag("--svg", ex.svg, "also write SVG plots");

    DiagnoseArgs dg;
    auto* d = app.add_subcommand("diagnose", "dictionary conditioning and degeneracy flags");
    d->add_option("inputs", dg.inputs, "trajectory CSVs")->required()->check(CLI::ExistingFile);
    d->add_option("-p,--degree", dg.degree, "dictionary degree")->capture_default_str();
    d->add_option("--tol", dg.tolerance, "flag tolerance on sigma_min / sigma_max")->capture_default_str();
    d->add_option("-o,--output", dg.output, "diagnostics JSON (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        return app.exit(pe, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*s) {
            try {
                return cmd_simulate(sim, out);
            } catch (const StructuralError& se) {
                throw UsageError(std::string("simulate: ") + se.what());
            }
        }
        if (*i) return cmd_identify(id, out, err);
        if (*e) return cmd_experiment(ex, out, err);
        if (*d) return cmd_diagnose(dg, out);
    } catch (const UsageError& ue) {
        err << "error: " << ue.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& ce) {
        err << "error: " << ce.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex2) {
        err << "error: " << ex2.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace gsid::cli
