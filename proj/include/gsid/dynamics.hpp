#pragma once
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <gsid/core_model.hpp>
#include <gsid/dictionary.hpp>
#include <gsid/errors.hpp>

namespace gsid {

struct PolynomialTerm
{
    MultiIndex exponents;
    double coefficient = 0.0;
};

/// Autonomous polynomial ODE x' = f(x) with its ground-truth coefficient table.
struct OdeSystem
{
    using Rhs = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

    std::string name;
    int dimension = 0;
    std::map<std::string, double> parameters;
    Rhs rhs;
    /// true_terms[j] lists the nonzero monomials of f_j.
    std::vector<std::vector<PolynomialTerm>> true_terms;

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd dx(dimension);
        rhs(x, dx);
        return dx;
    }

    /// f(x) evaluated from the coefficient table instead of the closure.
    Eigen::VectorXd evaluate_table(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(dimension);
        for (int j = 0; j < dimension; ++j) {
            for (const auto& term : true_terms[static_cast<std::size_t>(j)]) {
                double value = term.coefficient;
                for (int d = 0; d < dimension; ++d) value *= std::pow(x(d), term.exponents[static_cast<std::size_t>(d)]);
                out(j) += value;
            }
        }
        return out;
    }

    /// Coefficient of monomial `alpha` in component j (0 if absent).
    double true_coefficient(int j, const MultiIndex& alpha) const
    {
        for (const auto& term : true_terms.at(static_cast<std::size_t>(j))) {
            if (term.exponents == alpha) return term.coefficient;
        }
        return 0.0;
    }

    /// Dense ground truth for component j in the layout of `spec`.
    Eigen::VectorXd true_coefficients(const DictionarySpec& spec, int j) const
    {
        if (spec.n != dimension) throw StructuralError("true_coefficients: dictionary dimension mismatch");
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.size()));
        for (const auto& term : true_terms.at(static_cast<std::size_t>(j))) {
            const int k = spec.index_of(term.exponents);
            if (k < 0) throw StructuralError("true_coefficients: term " + term_name(term.exponents) +
                                             " exceeds dictionary degree");
            c(k) = term.coefficient;
        }
        return c;
    }

    /// Sorted dictionary indices of the nonzero true terms of component j.
    std::vector<int> true_support(const DictionarySpec& spec, int j) const
    {
        std::vector<int> s;
        const Eigen::VectorXd c = true_coefficients(spec, j);
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            if (c(k) != 0.0) s.push_back(static_cast<int>(k));
        }
        return s;
    }
};

namespace detail {

inline std::vector<PolynomialTerm> nonzero_terms(std::vector<PolynomialTerm> terms)
{
    std::erase_if(terms, [](const PolynomialTerm& t) { return t.coefficient == 0.0; });
    return terms;
}

inline std::size_t sample_count(double dt, double t_final)
{
    const double ratio = t_final / dt;
    return static_cast<std::size_t>(std::floor(ratio + 1e-9 * std::max(1.0, ratio))) + 1;
}

/// Advances rows [first, last) of `out` with classical RK4; row first-1 holds the start state.
inline void rk4_fill(const OdeSystem& system, double dt, Eigen::MatrixXd& out, Eigen::Index first,
                     Eigen::Index last)
{
    const int n = system.dimension;
    Eigen::VectorXd x = out.row(first - 1).transpose();
    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (Eigen::Index row = first; row < last; ++row) {
        system.rhs(x, k1);
        tmp = x + 0.5 * dt * k1;
        system.rhs(tmp, k2);
        tmp = x + 0.5 * dt * k2;
        system.rhs(tmp, k3);
        tmp = x + dt * k3;
        system.rhs(tmp, k4);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite()) {
            const double t = static_cast<double>(row) * dt;
            std::ostringstream msg;
            msg << system.name << ": integration blew up at t = " << t;
            throw IntegrationError(msg.str(), t);
        }
        out.row(row) = x.transpose();
    }
}

} // namespace detail

/// Classical fixed-step RK4 sampled at t = 0, dt, 2dt, ... with last sample <= t_final.
inline SourceSeries integrate(const OdeSystem& system, const Eigen::VectorXd& x0, double dt, double t_final,
                              int source_id = 1)
{
    if (!(dt > 0.0)) throw StructuralError("integrate: dt must be positive");
    if (!(t_final >= dt)) throw StructuralError("integrate: t_final must be >= dt");
    if (x0.size() != system.dimension) throw StructuralError("integrate: x0 has the wrong dimension");
    if (!x0.allFinite()) throw IntegrationError(system.name + ": non-finite initial state", 0.0);

    const auto count = static_cast<Eigen::Index>(detail::sample_count(dt, t_final));
    Eigen::MatrixXd states(count, system.dimension);
    states.row(0) = x0.transpose();
    detail::rk4_fill(system, dt, states, 1, count);
    return SourceSeries::uniform(dt, 0.0, std::move(states), source_id);
}

/// Logistic growth x' = alpha x (1 - x).
inline OdeSystem logistic(double alpha)
{
    OdeSystem s;
    s.name = "logistic";
    s.dimension = 1;
    s.parameters = {{"alpha", alpha}};
    s.rhs = [alpha](const Eigen::VectorXd& x, Eigen::VectorXd& dx) { dx(0) = alpha * x(0) * (1.0 - x(0)); };
    s.true_terms = {detail::nonzero_terms({{{1}, alpha}, {{2}, -alpha}})};
    return s;
}

/// Lorenz-type system with one bifurcation parameter:
///   x1' = 10 (x2 - x1)
///   x2' = (24 - 4 alpha) x1 + alpha x2 - x1 x3
///   x3' = x1 x2 - (8/3) x3
inline OdeSystem lorenz(double alpha)
{
    OdeSystem s;
    s.name = "lorenz";
    s.dimension = 3;
    s.parameters = {{"alpha", alpha}};
    const double a21 = 24.0 - 4.0 * alpha;
    constexpr double b = 8.0 / 3.0;
    s.rhs = [alpha, a21](const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx(0) = 10.0 * (x(1) - x(0));
        dx(1) = a21 * x(0) + alpha * x(1) - x(0) * x(2);
        dx(2) = x(0) * x(1) - b * x(2);
    };
    s.true_terms = {
        detail::nonzero_terms({{{1, 0, 0}, -10.0}, {{0, 1, 0}, 10.0}}),
        detail::nonzero_terms({{{1, 0, 0}, a21}, {{0, 1, 0}, alpha}, {{1, 0, 1}, -1.0}}),
        detail::nonzero_terms({{{1, 1, 0}, 1.0}, {{0, 0, 1}, -b}}),
    };
    return s;
}

/// Duffing oscillator u'' + delta u' - beta u + u^3 = 0 as a first-order system.
inline OdeSystem duffing(double beta, double delta)
{
    OdeSystem s;
    s.name = "duffing";
    s.dimension = 2;
    s.parameters = {{"beta", beta}, {"delta", delta}};
    s.rhs = [beta, delta](const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx(0) = x(1);
        dx(1) = beta * x(0) - delta * x(1) - x(0) * x(0) * x(0);
    };
    s.true_terms = {
        {{{0, 1}, 1.0}},
        detail::nonzero_terms({{{1, 0}, beta}, {{0, 1}, -delta}, {{3, 0}, -1.0}}),
    };
    return s;
}

/// Lorenz trajectory whose alpha jumps from alpha_before to alpha_after.
///
/// The switch takes effect at grid index floor(t_switch / dt): the sample at
/// that time is the last one produced by the "before" dynamics.
inline SourceSeries simulate_switching(double alpha_before, double alpha_after, const Eigen::VectorXd& x0,
                                       double dt, double t_switch, double t_final)
{
    if (!(dt > 0.0)) throw StructuralError("simulate_switching: dt must be positive");
    if (!(t_switch > 0.0 && t_switch < t_final)) {
        throw StructuralError("simulate_switching: need 0 < t_switch < t_final");
    }
    if (x0.size() != 3) throw StructuralError("simulate_switching: x0 must have 3 entries");
    const auto count = static_cast<Eigen::Index>(detail::sample_count(dt, t_final));
    const auto switch_index = static_cast<Eigen::Index>(detail::sample_count(dt, t_switch)) - 1;

    Eigen::MatrixXd states(count, 3);
    states.row(0) = x0.transpose();
    const auto before = lorenz(alpha_before);
    const auto after = lorenz(alpha_after);
    detail::rk4_fill(before, dt, states, 1, std::min(switch_index + 1, count));
    if (switch_index + 1 < count) detail::rk4_fill(after, dt, states, switch_index + 1, count);
    return SourceSeries::uniform(dt, 0.0, std::move(states), 1);
}

/// Splits a series into `segments` contiguous pieces; the first (length % segments)
/// pieces get one extra sample. Segment source ids start at 1.
inline std::vector<SourceSeries> split_into_segments(const SourceSeries& series, int segments)
{
    if (segments < 1) throw StructuralError("split_into_segments: need at least one segment");
    const Eigen::Index length = series.length();
    if (length < 3 * static_cast<Eigen::Index>(segments)) {
        throw StructuralError("split_into_segments: series of length " + std::to_string(length) +
                              " is too short for " + std::to_string(segments) + " segments");
    }
    const Eigen::Index base = length / segments;
    const Eigen::Index extra = length % segments;

    std::vector<SourceSeries> out;
    out.reserve(static_cast<std::size_t>(segments));
    Eigen::Index start = 0;
    for (int s = 0; s < segments; ++s) {
        const Eigen::Index len = base + (s < extra ? 1 : 0);
        std::vector<double> times(series.times().begin() + start, series.times().begin() + start + len);
        Eigen::MatrixXd states = series.states().middleRows(start, len);
        out.emplace_back(series.dt(), std::move(times), std::move(states), s + 1);
        start += len;
    }
    return out;
}

} // namespace gsid
