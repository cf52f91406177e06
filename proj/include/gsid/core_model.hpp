#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <gsid/dictionary.hpp>
#include <gsid/errors.hpp>

namespace gsid {

/// One source's sampled trajectory: uniform times and an l x n state matrix.
class SourceSeries
{
public:
    SourceSeries() = default;

    SourceSeries(double dt, std::vector<double> times, Eigen::MatrixXd states, int source_id = 1)
        : dt_(dt), times_(std::move(times)), states_(std::move(states)), source_id_(source_id)
    {
        validate();
    }

    /// Series sampled at t0, t0 + dt, t0 + 2dt, ...
    static SourceSeries uniform(double dt, double t0, Eigen::MatrixXd states, int source_id = 1)
    {
        std::vector<double> times(static_cast<std::size_t>(states.rows()));
        for (std::size_t k = 0; k < times.size(); ++k) times[k] = t0 + static_cast<double>(k) * dt;
        return SourceSeries(dt, std::move(times), std::move(states), source_id);
    }

    double dt() const noexcept { return dt_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const Eigen::MatrixXd& states() const noexcept { return states_; }
    int source_id() const noexcept { return source_id_; }
    Eigen::Index length() const noexcept { return states_.rows(); }
    int dimension() const noexcept { return static_cast<int>(states_.cols()); }

    SourceSeries with_source_id(int id) const
    {
        SourceSeries copy = *this;
        copy.source_id_ = id;
        return copy;
    }

    bool operator==(const SourceSeries& other) const
    {
        return dt_ == other.dt_ && times_ == other.times_ && source_id_ == other.source_id_ &&
               states_.rows() == other.states_.rows() && states_.cols() == other.states_.cols() &&
               states_ == other.states_;
    }

private:
    void validate() const
    {
        if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw StructuralError("SourceSeries: dt must be positive");
        if (states_.rows() < 3) throw StructuralError("SourceSeries: need at least 3 samples");
        if (static_cast<Eigen::Index>(times_.size()) != states_.rows()) {
            throw StructuralError("SourceSeries: times and states have different lengths");
        }
        for (std::size_t k = 1; k < times_.size(); ++k) {
            const double expected = times_.front() + static_cast<double>(k) * dt_;
            if (!(times_[k] > times_[k - 1]) ||
                std::abs(times_[k] - expected) > 1e-12 * std::max(std::abs(expected), 1.0)) {
                throw StructuralError("SourceSeries: times are not uniformly spaced at index " +
                                      std::to_string(k));
            }
        }
    }

    double dt_ = 1.0;
    std::vector<double> times_;
    Eigen::MatrixXd states_;
    int source_id_ = 1;
};

/// Block-diagonal regression system for one state component.
///
/// Dictionaries and velocities are stored already multiplied by `scale_factor`;
/// the physical problem is recovered by dividing both by it.
struct RegressionProblem
{
    std::vector<Eigen::MatrixXd> dictionaries;
    std::vector<Eigen::VectorXd> velocities;
    DictionarySpec spec;
    double scale_factor = 1.0;

    std::size_t sources() const noexcept { return dictionaries.size(); }
    Eigen::Index columns() const noexcept { return static_cast<Eigen::Index>(spec.size()); }

    void validate() const
    {
        if (dictionaries.empty()) throw StructuralError("RegressionProblem: no sources");
        if (dictionaries.size() != velocities.size()) {
            throw StructuralError("RegressionProblem: dictionary and velocity counts differ");
        }
        for (std::size_t i = 0; i < dictionaries.size(); ++i) {
            if (dictionaries[i].cols() != columns()) {
                throw StructuralError("RegressionProblem: dictionary " + std::to_string(i + 1) +
                                      " has the wrong column count");
            }
            if (dictionaries[i].rows() != velocities[i].size()) {
                throw StructuralError("RegressionProblem: source " + std::to_string(i + 1) +
                                      " has mismatched dictionary/velocity lengths");
            }
        }
        if (!(scale_factor > 0.0)) throw StructuralError("RegressionProblem: scale_factor must be positive");
    }
};

/// Rescales raw dictionaries and velocities jointly and assembles the problem.
inline RegressionProblem make_problem(const std::vector<Eigen::MatrixXd>& dictionaries,
                                      const std::vector<Eigen::VectorXd>& velocities,
                                      DictionarySpec spec)
{
    auto scaled = rescale(dictionaries);
    RegressionProblem problem;
    problem.dictionaries = std::move(scaled.dictionaries);
    problem.scale_factor = scaled.scale_factor;
    problem.velocities.reserve(velocities.size());
    for (const auto& v : velocities) problem.velocities.push_back(scaled.scale_factor * v);
    problem.spec = std::move(spec);
    problem.validate();
    return problem;
}

/// Number of rows with nonzero l2 norm.
inline std::size_t l20_norm(const Eigen::MatrixXd& c)
{
    std::size_t count = 0;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
        if (c.row(k).squaredNorm() != 0.0) ++count;
    }
    return count;
}

/// nbar x m coefficients (one column per source) together with its row support.
class CoefficientMatrix
{
public:
    CoefficientMatrix() = default;

    explicit CoefficientMatrix(Eigen::MatrixXd values) : values_(std::move(values))
    {
        for (Eigen::Index k = 0; k < values_.rows(); ++k) {
            if (values_.row(k).squaredNorm() != 0.0) support_.push_back(static_cast<int>(k));
        }
    }

    static CoefficientMatrix zero(Eigen::Index rows, Eigen::Index sources)
    {
        return CoefficientMatrix(Eigen::MatrixXd::Zero(rows, sources));
    }

    const Eigen::MatrixXd& values() const noexcept { return values_; }
    const std::vector<int>& support() const noexcept { return support_; }
    std::size_t l20() const noexcept { return support_.size(); }
    Eigen::Index rows() const noexcept { return values_.rows(); }
    Eigen::Index sources() const noexcept { return values_.cols(); }

    /// Nonzero rows of one source's column.
    std::vector<int> column_support(Eigen::Index source) const
    {
        std::vector<int> s;
        for (Eigen::Index k = 0; k < values_.rows(); ++k) {
            if (values_(k, source) != 0.0) s.push_back(static_cast<int>(k));
        }
        return s;
    }

    bool operator==(const CoefficientMatrix& other) const
    {
        return values_.rows() == other.values_.rows() && values_.cols() == other.values_.cols() &&
               values_ == other.values_;
    }

private:
    Eigen::MatrixXd values_;
    std::vector<int> support_;
};

inline std::size_t l20_norm(const CoefficientMatrix& c) { return c.l20(); }

/// Squared residual sum_i ||D_i c_i - V_i||^2 without the penalty.
inline double residual_sq(const RegressionProblem& problem, const Eigen::MatrixXd& c)
{
    if (c.rows() != problem.columns() || c.cols() != static_cast<Eigen::Index>(problem.sources())) {
        throw StructuralError("objective: coefficient matrix is " + std::to_string(c.rows()) + "x" +
                              std::to_string(c.cols()) + ", expected " +
                              std::to_string(problem.columns()) + "x" +
                              std::to_string(problem.sources()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < problem.sources(); ++i) {
        const auto col = c.col(static_cast<Eigen::Index>(i));
        total += (problem.dictionaries[i] * col - problem.velocities[i]).squaredNorm();
    }
    return total;
}

/// Group-sparse objective F(C) = sum_i ||D_i c_i - V_i||^2 + gamma * ||C||_{2,0}.
inline double objective(const RegressionProblem& problem, const Eigen::MatrixXd& c, double gamma)
{
    return residual_sq(problem, c) + gamma * static_cast<double>(l20_norm(c));
}

inline double objective(const RegressionProblem& problem, const CoefficientMatrix& c, double gamma)
{
    return objective(problem, c.values(), gamma);
}

/// Recovered equation for one state component.
struct ComponentModel
{
    int component = 0;              // 0-based state index j
    CoefficientMatrix coefficients; // unscaled, physical units
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    bool rank_warning = false;

    std::vector<MultiIndex> support_indices(const DictionarySpec& spec) const
    {
        std::vector<MultiIndex> out;
        for (int k : coefficients.support()) out.push_back(spec.multi_indices[static_cast<std::size_t>(k)]);
        return out;
    }

    std::vector<std::string> term_names(const DictionarySpec& spec) const
    {
        std::vector<std::string> out;
        for (int k : coefficients.support()) out.push_back(term_name(spec.multi_indices[static_cast<std::size_t>(k)]));
        return out;
    }

    /// Coefficients of one source restricted to the support, in support order.
    Eigen::VectorXd restricted(Eigen::Index source) const
    {
        const auto& s = coefficients.support();
        Eigen::VectorXd out(static_cast<Eigen::Index>(s.size()));
        for (std::size_t q = 0; q < s.size(); ++q) out(static_cast<Eigen::Index>(q)) = coefficients.values()(s[q], source);
        return out;
    }
};

/// Recovered system: one ComponentModel per state component.
struct IdentifiedModel
{
    DictionarySpec spec;
    std::vector<ComponentModel> components;

    std::size_t sources() const noexcept
    {
        return components.empty() ? 0 : static_cast<std::size_t>(components.front().coefficients.sources());
    }
};

/// Scatters restricted coefficients back into a full nbar-vector.
inline Eigen::VectorXd expand(const std::vector<int>& support, const Eigen::VectorXd& restricted, Eigen::Index nbar)
{
    Eigen::VectorXd full = Eigen::VectorXd::Zero(nbar);
    for (std::size_t q = 0; q < support.size(); ++q) full(support[q]) = restricted(static_cast<Eigen::Index>(q));
    return full;
}

} // namespace gsid
