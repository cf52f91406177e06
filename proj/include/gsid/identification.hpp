#pragma once
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <gsid/core_model.hpp>
#include <gsid/dictionary.hpp>
#include <gsid/differentiation.hpp>
#include <gsid/solver.hpp>

namespace gsid {

/// Decorrelated per-stream seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Differenced, dictionary-expanded and rescaled data shared by all components.
struct PreparedSources
{
    DictionarySpec spec;
    std::vector<Eigen::MatrixXd> states;       ///< interior samples per source
    std::vector<Eigen::MatrixXd> velocities;   ///< raw (possibly noisy) l_i x n
    std::vector<Eigen::MatrixXd> dictionaries; ///< scaled by scale_factor
    double scale_factor = 1.0;

    int dimension() const noexcept { return spec.n; }
    std::size_t sources() const noexcept { return dictionaries.size(); }
};

/// Central differences, optional velocity noise (noise[i] for source i, seeded
/// from `seed`), monomial dictionaries of degree `degree`, joint rescaling.
inline PreparedSources prepare_sources(const std::vector<SourceSeries>& series, int degree,
                                       const std::vector<double>& noise = {}, std::uint64_t seed = 0)
{
    if (series.empty()) throw StructuralError("prepare_sources: no sources");
    if (!noise.empty() && noise.size() != series.size()) {
        throw StructuralError("prepare_sources: need one noise level per source");
    }
    const int n = series.front().dimension();
    PreparedSources out;
    out.spec = enumerate_monomials(n, degree);

    std::vector<Eigen::MatrixXd> raw;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].dimension() != n) {
            throw StructuralError("prepare_sources: source " + std::to_string(i + 1) + " has dimension " +
                                  std::to_string(series[i].dimension()) + ", expected " + std::to_string(n));
        }
        auto diff = central_difference(series[i]);
        const double sigma = noise.empty() ? 0.0 : noise[i];
        out.velocities.push_back(add_noise(diff.velocities, sigma, derive_seed(seed, i)));
        raw.push_back(build_dictionary(diff.states, out.spec));
        out.states.push_back(std::move(diff.states));
    }
    auto scaled = rescale(raw);
    out.dictionaries = std::move(scaled.dictionaries);
    out.scale_factor = scaled.scale_factor;
    return out;
}

/// Regression problem for state component j (0-based).
inline RegressionProblem component_problem(const PreparedSources& prepared, int j)
{
    if (j < 0 || j >= prepared.dimension()) throw StructuralError("component_problem: component out of range");
    RegressionProblem problem;
    problem.dictionaries = prepared.dictionaries;
    problem.spec = prepared.spec;
    problem.scale_factor = prepared.scale_factor;
    for (const auto& v : prepared.velocities) problem.velocities.push_back(prepared.scale_factor * v.col(j));
    problem.validate();
    return problem;
}

/// Full-dictionary least squares for all components at once; entry j is C0 for component j.
inline std::vector<Eigen::MatrixXd> least_squares_starts(const PreparedSources& prepared)
{
    const auto nbar = static_cast<Eigen::Index>(prepared.spec.size());
    const auto m = static_cast<Eigen::Index>(prepared.sources());
    std::vector<Eigen::MatrixXd> starts(static_cast<std::size_t>(prepared.dimension()), Eigen::MatrixXd(nbar, m));
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
        cod.setThreshold(kRankTolerance);
        cod.compute(prepared.dictionaries[ui]);
        const Eigen::MatrixXd sol = cod.solve(prepared.scale_factor * prepared.velocities[ui]);
        for (int j = 0; j < prepared.dimension(); ++j) starts[static_cast<std::size_t>(j)].col(i) = sol.col(j);
    }
    return starts;
}

struct IdentifyOptions
{
    int degree = 2;
    SolverConfig solver;
    double noise = 0.0; ///< relative velocity noise applied to every source
    std::uint64_t seed = 0;
};

/// Solves every component of prepared data with one solver configuration.
inline IdentifiedModel identify(const PreparedSources& prepared, const SolverConfig& config)
{
    IdentifiedModel model;
    model.spec = prepared.spec;
    std::vector<Eigen::MatrixXd> starts;
    if (config.init == Initialization::LeastSquares) starts = least_squares_starts(prepared);
    for (int j = 0; j < prepared.dimension(); ++j) {
        const auto problem = component_problem(prepared, j);
        auto result = starts.empty() ? solve(problem, config)
                                     : solve(problem, config, starts[static_cast<std::size_t>(j)]);
        ComponentModel cm;
        cm.component = j;
        cm.coefficients = std::move(result.coefficients);
        cm.objective_trace = std::move(result.trace.objective);
        cm.iterations = result.trace.iterations;
        cm.converged = result.trace.converged;
        cm.rank_warning = result.trace.rank_warning;
        model.components.push_back(std::move(cm));
    }
    return model;
}

/// Full pipeline on user series: difference, optional noise, dictionary, rescale, solve.
inline IdentifiedModel identify(const std::vector<SourceSeries>& series, const IdentifyOptions& options)
{
    const std::vector<double> noise(series.size(), options.noise);
    return identify(prepare_sources(series, options.degree, noise, options.seed), options.solver);
}

/// "dx2/dt = 28.0232*x1 - 1.0093*x2 - 1.0002*x1*x3" for one source, 4 decimals.
inline std::string equation_string(const IdentifiedModel& model, int component, Eigen::Index source)
{
    const auto& cm = model.components.at(static_cast<std::size_t>(component));
    std::string out = "dx" + std::to_string(component + 1) + "/dt =";
    bool first = true;
    for (int k : cm.coefficients.support()) {
        const double c = cm.coefficients.values()(k, source);
        if (c == 0.0) continue;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.4f", std::abs(c));
        const std::string name = term_name(model.spec.multi_indices[static_cast<std::size_t>(k)]);
        out += first ? (c < 0 ? " -" : " ") : (c < 0 ? " - " : " + ");
        out += buf;
        if (name != "1") out += "*" + name;
        first = false;
    }
    if (first) out += " 0";
    return out;
}

inline nlohmann::json model_to_json(const IdentifiedModel& model)
{
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& cm : model.components) {
        nlohmann::json coeffs = nlohmann::json::array();
        for (Eigen::Index i = 0; i < cm.coefficients.sources(); ++i) {
            const Eigen::VectorXd r = cm.restricted(i);
            coeffs.push_back(std::vector<double>(r.data(), r.data() + r.size()));
        }
        comps.push_back({{"component", cm.component + 1},
                         {"support", cm.term_names(model.spec)},
                         {"multi_indices", cm.support_indices(model.spec)},
                         {"coefficients", coeffs},
                         {"iterations", cm.iterations},
                         {"converged", cm.converged},
                         {"rank_warning", cm.rank_warning},
                         {"objective_trace", cm.objective_trace}});
    }
    return {{"dictionary", model.spec}, {"sources", model.sources()}, {"components", comps}};
}

} // namespace gsid
