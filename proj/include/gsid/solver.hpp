#pragma once
#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <gsid/core_model.hpp>
#include <gsid/errors.hpp>

namespace gsid {

enum class Variant
{
    GroupL20,    ///< row-wise (group) hard thresholding, shared support
    PerSourceL0, ///< entry-wise hard thresholding, one support per source
    KsRows,      ///< keep the ceil(k*s) largest rows, exactly s at the end
};

enum class Initialization
{
    Zero,         ///< C0 = 0, first support is supp(H_a(D^T * V))
    LeastSquares, ///< C0 = per-source least squares on the full dictionary
};

inline std::string to_string(Variant v)
{
    switch (v) {
    case Variant::GroupL20: return "group-l20";
    case Variant::PerSourceL0: return "per-source-l0";
    case Variant::KsRows: return "ks-rows";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s)
{
    if (s == "group-l20" || s == "group") return Variant::GroupL20;
    if (s == "per-source-l0" || s == "l0") return Variant::PerSourceL0;
    if (s == "ks-rows") return Variant::KsRows;
    throw StructuralError("unknown solver variant '" + s + "' (expected group-l20, per-source-l0 or ks-rows)");
}

inline std::string to_string(Initialization init)
{
    return init == Initialization::Zero ? "zero" : "least-squares";
}

inline Initialization parse_initialization(const std::string& s)
{
    if (s == "zero") return Initialization::Zero;
    if (s == "least-squares" || s == "lstsq") return Initialization::LeastSquares;
    throw StructuralError("unknown initialization '" + s + "' (expected zero or least-squares)");
}

struct SolverConfig
{
    /// Threshold a applied to row norms; the penalty weight is gamma = a^2.
    double threshold = 0.0;
    double tol = 1e-8;
    int max_iter = 500;
    Variant variant = Variant::GroupL20;
    Initialization init = Initialization::Zero;
    int sparsity = 0;      ///< s, ks-rows only
    double k_factor = 2.0; ///< k > 1, ks-rows only

    double gamma() const noexcept { return threshold * threshold; }

    void validate() const
    {
        if (!(threshold >= 0.0)) throw StructuralError("SolverConfig: threshold must be >= 0");
        if (!(tol > 0.0)) throw StructuralError("SolverConfig: tol must be > 0");
        if (max_iter < 1) throw StructuralError("SolverConfig: max_iter must be >= 1");
        if (variant == Variant::KsRows) {
            if (sparsity < 1) throw StructuralError("SolverConfig: ks-rows needs sparsity s >= 1");
            if (!(k_factor > 1.0)) throw StructuralError("SolverConfig: ks-rows needs k_factor > 1");
        }
    }

    bool operator==(const SolverConfig&) const = default;
};

struct SolverTrace
{
    std::vector<double> objective;           ///< scaled F(C^k), k = 0 is the initial point
    std::vector<std::vector<int>> supports;  ///< support after each update (index 0: initial)
    int iterations = 0;
    bool converged = false;
    bool rank_warning = false;
    bool zero_support = false;

    /// Largest increase F(C^{k+1}) - F(C^k) along the trace (<= 0 for a monotone trace).
    double max_increase() const
    {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < objective.size(); ++k) worst = std::max(worst, objective[k] - objective[k - 1]);
        return objective.size() < 2 ? 0.0 : worst;
    }
};

inline void write_trace_csv(std::ostream& os, const SolverTrace& trace)
{
    os << "iteration,F,support_size\n";
    for (std::size_t k = 0; k < trace.objective.size(); ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", trace.objective[k]);
        os << k << ',' << buf << ',' << (k < trace.supports.size() ? trace.supports[k].size() : 0) << '\n';
    }
}

/// Row-wise hard thresholding: rows with ||row||_2 <= a become zero.
inline Eigen::MatrixXd group_threshold(const Eigen::MatrixXd& c, double a)
{
    Eigen::MatrixXd out = c;
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
        if (out.row(k).stableNorm() <= a) out.row(k).setZero();
    }
    return out;
}

/// Entry-wise hard thresholding: |c_ki| <= a becomes zero.
inline Eigen::MatrixXd entry_threshold(const Eigen::MatrixXd& c, double a)
{
    return (c.array().abs() <= a).select(0.0, c);
}

/// One gradient step c_i + D_i^T (V_i - D_i c_i) per source (unit step, scaled problem).
inline Eigen::MatrixXd gradient_step(const RegressionProblem& problem, const Eigen::MatrixXd& c)
{
    if (c.rows() != problem.columns() || c.cols() != static_cast<Eigen::Index>(problem.sources())) {
        throw StructuralError("gradient_step: coefficient matrix has the wrong shape");
    }
    Eigen::MatrixXd out(c.rows(), c.cols());
    for (std::size_t i = 0; i < problem.sources(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        const auto& d = problem.dictionaries[i];
        out.col(idx) = c.col(idx) + d.transpose() * (problem.velocities[i] - d * c.col(idx));
    }
    return out;
}

struct LeastSquaresResult
{
    Eigen::VectorXd coefficients; ///< full length, zero off the support
    bool rank_deficient = false;
};

/// Relative cutoff on the pivots of the column-pivoted QR below which the
/// restricted system is treated as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// argmin ||D_S u - V||_2 over u supported on `support`, via a complete
/// orthogonal decomposition (column-pivoted QR). Rank-deficient systems get the
/// minimum-norm solution and `rank_deficient = true`.
inline LeastSquaresResult restricted_least_squares(const Eigen::MatrixXd& d, const Eigen::VectorXd& v,
                                                   const std::vector<int>& support)
{
    if (d.rows() != v.size()) throw StructuralError("restricted_least_squares: row count mismatch");
    LeastSquaresResult result;
    result.coefficients = Eigen::VectorXd::Zero(d.cols());
    if (support.empty()) return result;
    for (int k : support) {
        if (k < 0 || k >= d.cols()) throw StructuralError("restricted_least_squares: support index out of range");
    }

    const Eigen::MatrixXd ds = d(Eigen::all, support);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankTolerance);
    cod.compute(ds);
    const Eigen::VectorXd u = cod.solve(v);
    result.rank_deficient = cod.rank() < static_cast<Eigen::Index>(support.size());
    for (std::size_t q = 0; q < support.size(); ++q) result.coefficients(support[q]) = u(static_cast<Eigen::Index>(q));
    return result;
}

struct SolveResult
{
    CoefficientMatrix coefficients; ///< refit on the unscaled problem (physical units)
    Eigen::MatrixXd scaled;         ///< last iterate in the scaled geometry
    std::vector<std::vector<int>> source_supports;
    SolverTrace trace;
};

/// Per-source least squares on all columns; the LeastSquares initialization.
inline Eigen::MatrixXd least_squares_start(const RegressionProblem& problem)
{
    std::vector<int> all(static_cast<std::size_t>(problem.columns()));
    std::iota(all.begin(), all.end(), 0);
    Eigen::MatrixXd c(problem.columns(), static_cast<Eigen::Index>(problem.sources()));
    for (std::size_t i = 0; i < problem.sources(); ++i) {
        c.col(static_cast<Eigen::Index>(i)) =
            restricted_least_squares(problem.dictionaries[i], problem.velocities[i], all).coefficients;
    }
    return c;
}

inline Eigen::MatrixXd initial_coefficients(const RegressionProblem& problem, Initialization init)
{
    if (init == Initialization::LeastSquares) return least_squares_start(problem);
    return Eigen::MatrixXd::Zero(problem.columns(), static_cast<Eigen::Index>(problem.sources()));
}

namespace detail {

inline std::vector<int> nonzero_rows(const Eigen::MatrixXd& c)
{
    std::vector<int> s;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
        if (c.row(k).squaredNorm() != 0.0) s.push_back(static_cast<int>(k));
    }
    return s;
}

inline std::vector<int> nonzero_entries(const Eigen::MatrixXd& c, Eigen::Index col)
{
    std::vector<int> s;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
        if (c(k, col) != 0.0) s.push_back(static_cast<int>(k));
    }
    return s;
}

/// Indices of the `keep` largest row norms; ties go to the lower index. Sorted ascending.
inline std::vector<int> largest_rows(const Eigen::MatrixXd& c, std::size_t keep)
{
    std::vector<int> order(static_cast<std::size_t>(c.rows()));
    std::iota(order.begin(), order.end(), 0);
    const Eigen::VectorXd norms = c.rowwise().norm();
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return norms(a) > norms(b); });
    order.resize(std::min(keep, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

inline double penalized_objective(const RegressionProblem& problem, const Eigen::MatrixXd& c,
                                  const SolverConfig& config)
{
    if (config.variant == Variant::PerSourceL0) {
        const auto nnz = (c.array() != 0.0).count();
        return residual_sq(problem, c) + config.gamma() * static_cast<double>(nnz);
    }
    return objective(problem, c, config.gamma());
}

} // namespace detail

/// Group hard-iterative thresholding.
///
/// Each iteration takes a unit gradient step, thresholds (row-wise, entry-wise or
/// by rank depending on the variant) to pick the support, and re-solves the
/// per-source least-squares problems restricted to it. Stops when
/// max |C^{k+1} - C^k| <= tol or after max_iter iterations. The returned
/// coefficients are a refit on the unscaled dictionaries over the final support.
inline SolveResult solve(const RegressionProblem& problem, const SolverConfig& config,
                         std::optional<Eigen::MatrixXd> c0 = std::nullopt)
{
    problem.validate();
    config.validate();
    const Eigen::Index nbar = problem.columns();
    const auto m = static_cast<Eigen::Index>(problem.sources());

    Eigen::MatrixXd c = c0 ? std::move(*c0) : initial_coefficients(problem, config.init);
    if (c.rows() != nbar || c.cols() != m) throw StructuralError("solve: C0 has the wrong shape");

    SolveResult result;
    auto& trace = result.trace;
    trace.objective.push_back(detail::penalized_objective(problem, c, config));
    trace.supports.push_back(detail::nonzero_rows(c));

    std::vector<std::vector<int>> supports(static_cast<std::size_t>(m));

    auto update = [&](const std::vector<std::vector<int>>& selected) {
        Eigen::MatrixXd next(nbar, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            auto ls = restricted_least_squares(problem.dictionaries[ui], problem.velocities[ui], selected[ui]);
            trace.rank_warning = trace.rank_warning || ls.rank_deficient;
            next.col(i) = ls.coefficients;
        }
        return next;
    };

    auto select = [&](const Eigen::MatrixXd& stepped, std::size_t rank_keep) {
        std::vector<std::vector<int>> selected(static_cast<std::size_t>(m));
        if (config.variant == Variant::PerSourceL0) {
            const Eigen::MatrixXd kept = entry_threshold(stepped, config.threshold);
            for (Eigen::Index i = 0; i < m; ++i) selected[static_cast<std::size_t>(i)] = detail::nonzero_entries(kept, i);
        } else {
            const auto rows = config.variant == Variant::KsRows
                                  ? detail::largest_rows(stepped, rank_keep)
                                  : detail::nonzero_rows(group_threshold(stepped, config.threshold));
            std::fill(selected.begin(), selected.end(), rows);
        }
        return selected;
    };

    auto record = [&](const Eigen::MatrixXd& next) {
        const double f = detail::penalized_objective(problem, next, config);
        // Monotone descent holds for the thresholding variants; ks-rows is rank-based.
        assert(config.variant == Variant::KsRows || f <= trace.objective.back() + 1e-9);
        trace.objective.push_back(f);
        trace.supports.push_back(detail::nonzero_rows(next));
    };

    const auto ks_keep = static_cast<std::size_t>(std::ceil(config.k_factor * config.sparsity));
    for (int it = 0; it < config.max_iter; ++it) {
        supports = select(gradient_step(problem, c), ks_keep);
        Eigen::MatrixXd next = update(supports);
        record(next);
        const double change = (next - c).cwiseAbs().maxCoeff();
        c = std::move(next);
        trace.iterations = it + 1;
        if (change <= config.tol) {
            trace.converged = true;
            break;
        }
    }

    if (config.variant == Variant::KsRows) {
        supports = select(gradient_step(problem, c), static_cast<std::size_t>(config.sparsity));
        c = update(supports);
        record(c);
    }

    // Refit in physical units over the final support.
    Eigen::MatrixXd physical = Eigen::MatrixXd::Zero(nbar, m);
    const double inv = 1.0 / problem.scale_factor;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (supports[ui].empty()) continue;
        const auto& s = supports[ui];
        const Eigen::MatrixXd d = problem.dictionaries[ui](Eigen::all, s) * inv;
        const Eigen::VectorXd v = problem.velocities[ui] * inv;
        std::vector<int> local(s.size());
        std::iota(local.begin(), local.end(), 0);
        const auto ls = restricted_least_squares(d, v, local);
        for (std::size_t q = 0; q < s.size(); ++q) physical(s[q], i) = ls.coefficients(static_cast<Eigen::Index>(q));
    }
    result.coefficients = CoefficientMatrix(std::move(physical));
    trace.zero_support = result.coefficients.l20() == 0;
    result.scaled = std::move(c);
    result.source_supports = std::move(supports);
    return result;
}

} // namespace gsid
