#pragma once
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include <gsid/core_model.hpp>
#include <gsid/dynamics.hpp>
#include <gsid/identification.hpp>
#include <gsid/solver.hpp>

namespace gsid {

enum class SystemKind
{
    Logistic,
    Lorenz,
    Duffing,
};

inline std::string to_string(SystemKind k)
{
    switch (k) {
    case SystemKind::Logistic: return "logistic";
    case SystemKind::Lorenz: return "lorenz";
    case SystemKind::Duffing: return "duffing";
    }
    return "?";
}

inline SystemKind parse_system(const std::string& s)
{
    if (s == "logistic") return SystemKind::Logistic;
    if (s == "lorenz") return SystemKind::Lorenz;
    if (s == "duffing") return SystemKind::Duffing;
    throw StructuralError("unknown system '" + s + "' (expected logistic, lorenz or duffing)");
}

inline std::vector<std::string> parameter_names(SystemKind k)
{
    if (k == SystemKind::Duffing) return {"beta", "delta"};
    return {"alpha"};
}

inline OdeSystem make_system(SystemKind kind, const std::map<std::string, double>& params)
{
    auto get = [&](const std::string& key) {
        auto it = params.find(key);
        if (it == params.end()) throw StructuralError(to_string(kind) + ": missing parameter '" + key + "'");
        return it->second;
    };
    switch (kind) {
    case SystemKind::Logistic: return logistic(get("alpha"));
    case SystemKind::Lorenz: return lorenz(get("alpha"));
    case SystemKind::Duffing: return duffing(get("beta"), get("delta"));
    }
    throw StructuralError("make_system: unknown system");
}

inline int system_dimension(SystemKind kind)
{
    switch (kind) {
    case SystemKind::Logistic: return 1;
    case SystemKind::Lorenz: return 3;
    case SystemKind::Duffing: return 2;
    }
    return 0;
}

struct SourceSetup
{
    std::map<std::string, double> params;
    std::vector<double> x0;
    double t_final = 1.0;
    double noise = 0.0; ///< relative velocity noise (0.005 = 0.5%)

    bool operator==(const SourceSetup&) const = default;
};

struct ExperimentConfig
{
    std::string name = "experiment";
    SystemKind system = SystemKind::Logistic;
    double dt = 0.005;
    std::vector<SourceSetup> sources;
    int degree = 2;
    SolverConfig solver;
    std::vector<Variant> variants{Variant::GroupL20};
    int trials = 1;
    std::uint64_t base_seed = 0;
    int threads = 0; ///< 0: hardware concurrency
    bool record_traces = false;

    void validate() const
    {
        if (trials < 1) throw ConfigError("trials: must be >= 1");
        if (sources.empty()) throw ConfigError("sources: need at least one source");
        if (!(dt > 0.0)) throw ConfigError("dt: must be positive");
        if (degree < 0) throw ConfigError("degree: must be >= 0");
        if (variants.empty()) throw ConfigError("variants: need at least one variant");
        const auto n = static_cast<std::size_t>(system_dimension(system));
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const std::string at = "sources[" + std::to_string(i) + "]";
            if (sources[i].x0.size() != n) throw ConfigError(at + ".x0: expected " + std::to_string(n) + " entries");
            if (!(sources[i].t_final >= dt)) throw ConfigError(at + ".t_final: must be >= dt");
            if (!(sources[i].noise >= 0.0)) throw ConfigError(at + ".noise: must be >= 0");
            for (const auto& p : parameter_names(system)) {
                if (!sources[i].params.contains(p)) throw ConfigError(at + ".params." + p + ": missing");
            }
        }
        for (auto v : variants) {
            SolverConfig c = solver;
            c.variant = v;
            try {
                c.validate();
            } catch (const StructuralError& e) {
                throw ConfigError(std::string("solver: ") + e.what());
            }
        }
    }
};

// ---------------------------------------------------------------- scoring

/// True iff every component's estimated support equals the truth, for every
/// source (truths[i] describes source i).
inline bool support_match(const IdentifiedModel& estimated, const std::vector<OdeSystem>& truths)
{
    if (estimated.components.empty()) return false;
    if (truths.size() != estimated.sources()) throw StructuralError("support_match: one truth per source required");
    for (const auto& cm : estimated.components) {
        for (std::size_t i = 0; i < truths.size(); ++i) {
            if (truths[i].dimension != estimated.spec.n) throw StructuralError("support_match: dimension mismatch");
            if (cm.coefficients.column_support(static_cast<Eigen::Index>(i)) !=
                truths[i].true_support(estimated.spec, cm.component)) {
                return false;
            }
        }
    }
    return true;
}

/// Same truth for all sources.
inline bool support_match(const IdentifiedModel& estimated, const OdeSystem& truth)
{
    return support_match(estimated, std::vector<OdeSystem>(estimated.sources(), truth));
}

/// Mean of |est_k - true_k| / |true_k| * 100 over the nonzero entries of `truth`.
inline double relative_error(const Eigen::VectorXd& estimated, const Eigen::VectorXd& truth)
{
    if (estimated.size() != truth.size()) throw StructuralError("relative_error: size mismatch");
    double total = 0.0;
    int count = 0;
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
        if (truth(k) == 0.0) continue;
        total += std::abs(estimated(k) - truth(k)) / std::abs(truth(k));
        ++count;
    }
    if (count == 0) throw StructuralError("relative_error: truth support is empty");
    return 100.0 * total / count;
}

// ---------------------------------------------------------------- reports

struct VariantOutcome
{
    Variant variant = Variant::GroupL20;
    bool match = false;
    /// supports[j][i]: term names of component j, source i.
    std::vector<std::vector<std::vector<std::string>>> supports;
    std::vector<double> source_errors_pct;              ///< all components pooled, per source
    std::vector<std::vector<double>> component_errors_pct; ///< [j][i]
    std::vector<int> iterations;                        ///< per component
    std::vector<bool> converged;                        ///< per component
    double max_objective_increase = 0.0;                ///< over all component traces
    std::vector<std::vector<double>> traces;            ///< per component, when recorded

    bool operator==(const VariantOutcome&) const = default;
};

struct TrialRecord
{
    int trial = 0; ///< 1-based
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    std::vector<VariantOutcome> outcomes;

    bool operator==(const TrialRecord&) const = default;
};

struct VariantSummary
{
    Variant variant = Variant::GroupL20;
    int matches = 0;
    double recovery_probability = 0.0;
    std::vector<double> mean_source_error_pct;
    double mean_error_pct = 0.0;
    double max_objective_increase = 0.0;

    bool operator==(const VariantSummary&) const = default;
};

struct ExperimentReport
{
    std::string name;
    std::string system;
    int trials = 0;
    std::uint64_t base_seed = 0;
    int failed_trials = 0;
    std::vector<VariantSummary> summaries;
    std::vector<TrialRecord> records;

    const VariantSummary* summary(Variant v) const
    {
        for (const auto& s : summaries) {
            if (s.variant == v) return &s;
        }
        return nullptr;
    }

    bool operator==(const ExperimentReport&) const = default;
};

/// Named numeric table destined for a figure-data CSV.
struct FigureTable
{
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ExperimentOutput
{
    ExperimentReport report;
    std::vector<FigureTable> figures;
    /// Models identified in trial 1, one per variant (empty if trial 1 failed).
    std::vector<IdentifiedModel> first_trial_models;
};

namespace detail {

inline VariantOutcome score(const IdentifiedModel& model, Variant variant, const std::vector<OdeSystem>& truths,
                            bool record_traces)
{
    VariantOutcome out;
    out.variant = variant;
    out.match = support_match(model, truths);
    const auto m = model.sources();
    const auto nbar = static_cast<Eigen::Index>(model.spec.size());
    out.source_errors_pct.assign(m, 0.0);
    out.max_objective_increase = -std::numeric_limits<double>::infinity();

    std::vector<double> pooled_sum(m, 0.0);
    std::vector<int> pooled_count(m, 0);
    for (const auto& cm : model.components) {
        std::vector<std::vector<std::string>> per_source;
        std::vector<double> errs;
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<std::string> names;
            for (int k : cm.coefficients.column_support(static_cast<Eigen::Index>(i))) {
                names.push_back(term_name(model.spec.multi_indices[static_cast<std::size_t>(k)]));
            }
            per_source.push_back(std::move(names));

            const Eigen::VectorXd truth = truths[i].true_coefficients(model.spec, cm.component);
            const Eigen::VectorXd est = cm.coefficients.values().col(static_cast<Eigen::Index>(i));
            double comp_err = 0.0;
            int count = 0;
            for (Eigen::Index k = 0; k < nbar; ++k) {
                if (truth(k) == 0.0) continue;
                const double e = std::abs(est(k) - truth(k)) / std::abs(truth(k));
                comp_err += e;
                pooled_sum[i] += e;
                ++count;
                ++pooled_count[i];
            }
            errs.push_back(count ? 100.0 * comp_err / count : 0.0);
        }
        out.supports.push_back(std::move(per_source));
        out.component_errors_pct.push_back(std::move(errs));
        out.iterations.push_back(cm.iterations);
        out.converged.push_back(cm.converged);

        for (std::size_t k = 1; k < cm.objective_trace.size(); ++k) {
            out.max_objective_increase =
                std::max(out.max_objective_increase, cm.objective_trace[k] - cm.objective_trace[k - 1]);
        }
        if (record_traces) out.traces.push_back(cm.objective_trace);
    }
    for (std::size_t i = 0; i < m; ++i) {
        out.source_errors_pct[i] = pooled_count[i] ? 100.0 * pooled_sum[i] / pooled_count[i] : 0.0;
    }
    if (!std::isfinite(out.max_objective_increase)) out.max_objective_increase = 0.0;
    return out;
}

/// Runs body(t) for t in [0, count) on `threads` workers; rethrows the first exception.
template <typename Body>
void parallel_for(int count, int threads, Body&& body)
{
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int t = 0; t < count; ++t) body(t);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int t = next++; t < count; t = next++) {
                try {
                    body(t);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

} // namespace detail

/// Simulates every source of `config` (trajectories do not depend on the seed).
inline std::vector<SourceSeries> simulate_sources(const ExperimentConfig& config)
{
    std::vector<SourceSeries> series;
    for (std::size_t i = 0; i < config.sources.size(); ++i) {
        const auto& src = config.sources[i];
        const auto system = make_system(config.system, src.params);
        const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(src.x0.data(), static_cast<Eigen::Index>(src.x0.size()));
        series.push_back(integrate(system, x0, config.dt, src.t_final, static_cast<int>(i) + 1));
    }
    return series;
}

/// Runs config.trials independent trials (seed = base_seed + trial) and
/// aggregates recovery probability and coefficient errors per variant.
inline ExperimentOutput run_experiment(const ExperimentConfig& config)
{
    config.validate();
    std::vector<OdeSystem> truths;
    for (const auto& src : config.sources) truths.push_back(make_system(config.system, src.params));
    {
        const auto spec = enumerate_monomials(system_dimension(config.system), config.degree);
        for (std::size_t i = 0; i < truths.size(); ++i) {
            bool any = false;
            for (int j = 0; j < truths[i].dimension; ++j) any = any || !truths[i].true_support(spec, j).empty();
            if (!any) throw ConfigError("sources[" + std::to_string(i) + "]: zero dynamics, relative error undefined");
        }
    }
    std::vector<double> noise;
    for (const auto& src : config.sources) noise.push_back(src.noise);

    ExperimentOutput output;
    auto& report = output.report;
    report.name = config.name;
    report.system = to_string(config.system);
    report.trials = config.trials;
    report.base_seed = config.base_seed;
    report.records.resize(static_cast<std::size_t>(config.trials));
    std::mutex first_mutex;

    detail::parallel_for(config.trials, config.threads, [&](int t) {
        TrialRecord rec;
        rec.trial = t + 1;
        rec.seed = config.base_seed + static_cast<std::uint64_t>(t + 1);
        try {
            const auto series = simulate_sources(config);
            const auto prepared = prepare_sources(series, config.degree, noise, rec.seed);
            std::vector<IdentifiedModel> models;
            for (auto v : config.variants) {
                SolverConfig sc = config.solver;
                sc.variant = v;
                auto model = identify(prepared, sc);
                rec.outcomes.push_back(detail::score(model, v, truths, config.record_traces));
                if (t == 0) models.push_back(std::move(model));
            }
            if (t == 0) {
                std::lock_guard lock(first_mutex);
                output.first_trial_models = std::move(models);
                for (std::size_t i = 0; i < series.size(); ++i) {
                    FigureTable states{"state_space_source" + std::to_string(i + 1), {"t"}, {}};
                    FigureTable vel{"velocity_space_source" + std::to_string(i + 1), {"t"}, {}};
                    for (int d = 0; d < prepared.dimension(); ++d) {
                        states.columns.push_back("x" + std::to_string(d + 1));
                        vel.columns.push_back("v" + std::to_string(d + 1));
                    }
                    const auto& st = prepared.states[i];
                    for (Eigen::Index k = 0; k < st.rows(); ++k) {
                        const double time = series[i].times()[static_cast<std::size_t>(k + 1)];
                        std::vector<double> srow{time}, vrow{time};
                        for (int d = 0; d < prepared.dimension(); ++d) {
                            srow.push_back(st(k, d));
                            vrow.push_back(prepared.velocities[i](k, d));
                        }
                        states.rows.push_back(std::move(srow));
                        vel.rows.push_back(std::move(vrow));
                    }
                    output.figures.push_back(std::move(states));
                    output.figures.push_back(std::move(vel));
                }
            }
        } catch (const IntegrationError& e) {
            rec.failed = true;
            rec.failure = e.what();
            rec.outcomes.clear();
        }
        report.records[static_cast<std::size_t>(t)] = std::move(rec);
    });

    for (std::size_t vi = 0; vi < config.variants.size(); ++vi) {
        VariantSummary s;
        s.variant = config.variants[vi];
        s.mean_source_error_pct.assign(config.sources.size(), 0.0);
        int completed = 0;
        for (const auto& rec : report.records) {
            if (rec.failed) continue;
            ++completed;
            const auto& o = rec.outcomes[vi];
            if (o.match) ++s.matches;
            for (std::size_t i = 0; i < o.source_errors_pct.size(); ++i) s.mean_source_error_pct[i] += o.source_errors_pct[i];
            s.max_objective_increase = completed == 1 ? o.max_objective_increase
                                                      : std::max(s.max_objective_increase, o.max_objective_increase);
        }
        if (completed > 0) {
            for (auto& e : s.mean_source_error_pct) e /= completed;
            double total = 0.0;
            for (double e : s.mean_source_error_pct) total += e;
            s.mean_error_pct = total / static_cast<double>(s.mean_source_error_pct.size());
        }
        s.recovery_probability = static_cast<double>(s.matches) / static_cast<double>(config.trials);
        report.summaries.push_back(std::move(s));
    }
    report.failed_trials = static_cast<int>(
        std::count_if(report.records.begin(), report.records.end(), [](const TrialRecord& r) { return r.failed; }));
    return output;
}

inline ExperimentReport run_trials(const ExperimentConfig& config)
{
    return run_experiment(config).report;
}

// ---------------------------------------------------------------- reference configurations

/// Two logistic sources, alpha = 0.05 and 0.23, degree-6 dictionary.
inline ExperimentConfig logistic_config()
{
    ExperimentConfig c;
    c.name = "logistic";
    c.system = SystemKind::Logistic;
    c.dt = 0.005;
    c.sources = {
        {{{"alpha", 0.05}}, {0.01}, 50.0, 0.0005},
        {{{"alpha", 0.23}}, {0.01}, 50.0, 0.0001},
    };
    c.degree = 6;
    c.solver.threshold = 0.0018;
    c.solver.init = Initialization::Zero;
    c.variants = {Variant::GroupL20, Variant::PerSourceL0};
    c.trials = 100;
    c.base_seed = 0;
    return c;
}

/// Five Lorenz regimes (alpha = -1, 4.7, 6.9, 7.075, 7.73), degree-4 dictionary.
inline ExperimentConfig lorenz_regimes_config()
{
    ExperimentConfig c;
    c.name = "lorenz5";
    c.system = SystemKind::Lorenz;
    c.dt = 0.005;
    const double noise = 0.005;
    c.sources = {
        {{{"alpha", -1.0}}, {-8.0, 7.0, 27.0}, 7.5, noise},
        {{{"alpha", 4.7}}, {0.0, -0.01, 9.0}, 12.5, noise},
        {{{"alpha", 6.9}}, {1.0, 2.0, 1.0}, 50.0, noise},
        {{{"alpha", 7.075}}, {1.0, 1.0, 2.0}, 15.0, noise},
        {{{"alpha", 7.73}}, {2.0, 1.0, -5.0}, 10.0, noise},
    };
    c.degree = 4;
    c.solver.threshold = 1.7;
    c.solver.init = Initialization::LeastSquares;
    c.variants = {Variant::GroupL20};
    c.trials = 100;
    c.base_seed = 0;
    return c;
}

struct LorenzOverrides
{
    std::optional<double> noise;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
    std::optional<int> threads;
};

/// Recovered component-2 coefficients of trial 1 (rows = terms, columns = sets).
struct CoefficientTable
{
    std::vector<std::string> terms;
    Eigen::MatrixXd estimated;
    Eigen::MatrixXd truth;
};

struct LorenzRegimesResult
{
    ExperimentConfig config;
    ExperimentOutput output;
    CoefficientTable table;
};

inline CoefficientTable component_table(const IdentifiedModel& model, const std::vector<OdeSystem>& truths, int component)
{
    CoefficientTable t;
    for (const auto& alpha : model.spec.multi_indices) t.terms.push_back(term_name(alpha));
    t.estimated = model.components.at(static_cast<std::size_t>(component)).coefficients.values();
    t.truth.resize(t.estimated.rows(), static_cast<Eigen::Index>(truths.size()));
    for (std::size_t i = 0; i < truths.size(); ++i) {
        t.truth.col(static_cast<Eigen::Index>(i)) = truths[i].true_coefficients(model.spec, component);
    }
    return t;
}

inline LorenzRegimesResult lorenz_regimes_experiment(ExperimentConfig config)
{
    LorenzRegimesResult result;
    result.output = run_experiment(config);
    std::vector<OdeSystem> truths;
    for (const auto& src : config.sources) truths.push_back(make_system(config.system, src.params));
    if (!result.output.first_trial_models.empty()) {
        result.table = component_table(result.output.first_trial_models.front(), truths, 1);
    }
    result.config = std::move(config);
    return result;
}

inline LorenzRegimesResult lorenz_regimes_experiment(const LorenzOverrides& overrides = {})
{
    auto config = lorenz_regimes_config();
    if (overrides.noise) {
        for (auto& s : config.sources) s.noise = *overrides.noise;
    }
    if (overrides.trials) config.trials = *overrides.trials;
    if (overrides.seed) config.base_seed = *overrides.seed;
    if (overrides.threshold) config.solver.threshold = *overrides.threshold;
    if (overrides.threads) config.threads = *overrides.threads;
    return lorenz_regimes_experiment(std::move(config));
}

// ---------------------------------------------------------------- switching system

struct SwitchingConfig
{
    double alpha_before = -1.0;
    double alpha_after = 6.6;
    std::vector<double> x0{-8.0, 7.0, 27.0};
    double dt = 0.005;
    double t_final = 48.0;
    std::optional<double> t_switch; ///< default: 16.5 / 32 * t_final (middle of segment 17 of 32)
    int segments = 32;
    int degree = 4;
    SolverConfig solver = [] {
        SolverConfig s;
        s.threshold = 1.7;
        s.init = Initialization::LeastSquares;
        return s;
    }();
    double noise = 0.0;
    std::uint64_t seed = 0;
    int component = 1; ///< 0-based component whose coefficients are mapped

    double switch_time() const { return t_switch.value_or(16.5 / 32.0 * t_final); }

    void validate() const
    {
        if (segments < 2) throw ConfigError("switching.segments: must be >= 2");
        if (x0.size() != 3) throw ConfigError("switching.x0: expected 3 entries");
        if (!(dt > 0.0)) throw ConfigError("switching.dt: must be positive");
        if (!(switch_time() > 0.0 && switch_time() < t_final)) throw ConfigError("switching.t_switch: must lie in (0, t_final)");
        if (component < 0 || component > 2) throw ConfigError("switching.component: must be 1, 2 or 3");
        if (!(noise >= 0.0)) throw ConfigError("switching.noise: must be >= 0");
        try {
            solver.validate();
        } catch (const StructuralError& e) {
            throw ConfigError(std::string("solver: ") + e.what());
        }
    }
};

struct SegmentationReport
{
    int segments = 0;
    double t_switch = 0.0;
    int switch_segment = 0;      ///< 1-based argmax of the residual
    int true_switch_segment = 0; ///< 1-based segment holding the last pre-switch sample
    std::vector<double> residuals;                    ///< per segment, all components pooled
    std::vector<std::vector<double>> component_residuals; ///< [j][segment]
    std::vector<std::vector<std::string>> support;    ///< per component, after excluding the switch segment
    std::vector<std::string> group_support;           ///< mapped component, before exclusion
    std::vector<std::string> terms;                   ///< dictionary terms (row labels of the maps)
    std::vector<std::vector<double>> coefficient_map; ///< [segment][term], mapped component
    std::vector<std::vector<double>> group_coefficient_map; ///< [segment][term], single group fit over all segments
    std::vector<int> regime;                          ///< per segment: 0 before, 1 after, -1 switch segment
    std::vector<bool> support_correct;                ///< per segment, mapped component vs its regime
    std::vector<double> max_rel_error_pct;            ///< per segment, mapped component vs its regime

    bool operator==(const SegmentationReport&) const = default;
};

namespace detail {

inline PreparedSources subset(const PreparedSources& all, const std::vector<std::size_t>& keep)
{
    PreparedSources out;
    out.spec = all.spec;
    out.scale_factor = all.scale_factor;
    for (auto i : keep) {
        out.states.push_back(all.states[i]);
        out.velocities.push_back(all.velocities[i]);
        out.dictionaries.push_back(all.dictionaries[i]);
    }
    return out;
}

} // namespace detail

/// Splits a switching Lorenz trajectory into M sources, fits one group model,
/// locates the switch as the segment with the largest residual
/// ||D_i c_i - V_i||_2 / sqrt(l_i), then refits the group model without that
/// segment. The switch segment gets its own single-source fit.
inline SegmentationReport switching_experiment(const SwitchingConfig& config)
{
    config.validate();
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(config.x0.data(), 3);
    const double t_switch = config.switch_time();
    const auto series = simulate_switching(config.alpha_before, config.alpha_after, x0, config.dt, t_switch, config.t_final);
    const auto segments = split_into_segments(series, config.segments);
    const std::vector<double> noise(segments.size(), config.noise);
    const auto prepared = prepare_sources(segments, config.degree, noise, config.seed);
    const auto m = segments.size();
    const int n = prepared.dimension();
    const auto nbar = static_cast<Eigen::Index>(prepared.spec.size());

    SegmentationReport report;
    report.segments = config.segments;
    report.t_switch = t_switch;
    for (const auto& alpha : prepared.spec.multi_indices) report.terms.push_back(term_name(alpha));

    const auto switch_index = static_cast<Eigen::Index>(detail::sample_count(config.dt, t_switch)) - 1;
    {
        Eigen::Index start = 0;
        for (std::size_t s = 0; s < m; ++s) {
            if (switch_index >= start && switch_index < start + segments[s].length()) {
                report.true_switch_segment = static_cast<int>(s) + 1;
            }
            start += segments[s].length();
        }
    }

    // Stage 1: one group model over all segments.
    const auto full = identify(prepared, config.solver);
    report.component_residuals.assign(static_cast<std::size_t>(n), std::vector<double>(m, 0.0));
    report.residuals.assign(m, 0.0);
    const double inv = 1.0 / prepared.scale_factor;
    for (int j = 0; j < n; ++j) {
        const auto& c = full.components[static_cast<std::size_t>(j)].coefficients.values();
        for (std::size_t i = 0; i < m; ++i) {
            const Eigen::VectorXd r = inv * (prepared.dictionaries[i] * c.col(static_cast<Eigen::Index>(i))) -
                                      prepared.velocities[i].col(j);
            const double rms = r.norm() / std::sqrt(static_cast<double>(r.size()));
            report.component_residuals[static_cast<std::size_t>(j)][i] = rms;
            report.residuals[i] += rms * rms;
        }
    }
    for (auto& r : report.residuals) r = std::sqrt(r);
    const auto worst = static_cast<std::size_t>(
        std::max_element(report.residuals.begin(), report.residuals.end()) - report.residuals.begin());
    report.switch_segment = static_cast<int>(worst) + 1;
    report.group_support = full.components[static_cast<std::size_t>(config.component)].term_names(prepared.spec);
    {
        const auto& c = full.components[static_cast<std::size_t>(config.component)].coefficients.values();
        for (std::size_t i = 0; i < m; ++i) {
            const Eigen::VectorXd col = c.col(static_cast<Eigen::Index>(i));
            report.group_coefficient_map.emplace_back(col.data(), col.data() + col.size());
        }
    }

    // Stage 2: group model without the anomalous segment, single fit for it.
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < m; ++i) {
        if (i != worst) keep.push_back(i);
    }
    const auto rest = identify(detail::subset(prepared, keep), config.solver);
    const auto lone = identify(detail::subset(prepared, {worst}), config.solver);
    for (int j = 0; j < n; ++j) report.support.push_back(rest.components[static_cast<std::size_t>(j)].term_names(prepared.spec));

    const auto before = lorenz(config.alpha_before);
    const auto after = lorenz(config.alpha_after);
    const auto& mapped_rest = rest.components[static_cast<std::size_t>(config.component)].coefficients.values();
    const auto& mapped_lone = lone.components[static_cast<std::size_t>(config.component)].coefficients.values();
    std::size_t q = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::VectorXd col = i == worst ? Eigen::VectorXd(mapped_lone.col(0))
                                               : Eigen::VectorXd(mapped_rest.col(static_cast<Eigen::Index>(q++)));
        report.coefficient_map.emplace_back(col.data(), col.data() + col.size());
        if (i == worst) {
            report.regime.push_back(-1);
            report.support_correct.push_back(false);
            report.max_rel_error_pct.push_back(0.0);
            continue;
        }
        const int segment = static_cast<int>(i) + 1;
        const int regime = segment < report.true_switch_segment ? 0 : (segment > report.true_switch_segment ? 1 : 0);
        const auto& truth_system = regime == 0 ? before : after;
        const Eigen::VectorXd truth = truth_system.true_coefficients(prepared.spec, config.component);
        bool correct = true;
        double worst_err = 0.0;
        for (Eigen::Index k = 0; k < nbar; ++k) {
            if ((truth(k) != 0.0) != (col(k) != 0.0)) correct = false;
            if (truth(k) != 0.0) worst_err = std::max(worst_err, 100.0 * std::abs(col(k) - truth(k)) / std::abs(truth(k)));
        }
        report.regime.push_back(regime);
        report.support_correct.push_back(correct);
        report.max_rel_error_pct.push_back(worst_err);
    }
    return report;
}

} // namespace gsid
