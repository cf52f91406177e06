#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <gsid/core_model.hpp>

namespace gsid {

/// Relative rank tolerance on sigma_min / sigma_max.
inline constexpr double kFullRankTolerance = 1e-10;

struct RankCheck
{
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    bool full_rank = false;

    double ratio() const noexcept { return sigma_max > 0.0 ? sigma_min / sigma_max : 0.0; }
};

/// Extreme singular values of `d`. A wide matrix has a null space, so its
/// sigma_min is reported as 0.
inline RankCheck full_rank_check(const Eigen::MatrixXd& d)
{
    RankCheck out;
    if (d.cols() == 0 || d.rows() == 0) return out;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
    const auto& sv = svd.singularValues();
    out.sigma_max = sv(0);
    out.sigma_min = d.rows() < d.cols() ? 0.0 : sv(sv.size() - 1);
    out.full_rank = out.sigma_max > 0.0 && out.sigma_min / out.sigma_max > kFullRankTolerance;
    return out;
}

/// Smallest singular value of a matrix, 0 when it has more columns than rows.
inline double smallest_singular_value(const Eigen::MatrixXd& d)
{
    if (d.cols() == 0) return 0.0;
    if (d.rows() < d.cols()) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

struct CoercivityEstimate
{
    double delta = 0.0;
    bool exhaustive = true;          ///< false: sampled subsets only (an upper estimate of the true minimum)
    std::uint64_t subsets_evaluated = 0;
};

inline double binomial(std::int64_t n, std::int64_t k)
{
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::int64_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(r);
}

/// min over column subsets S with |S| = s of sigma_min(D_S).
///
/// Exhaustive when binomial(nbar, s) <= max_subsets; otherwise `max_subsets`
/// uniformly random subsets are drawn (seeded) and the result is flagged.
inline CoercivityEstimate sparse_coercivity(const Eigen::MatrixXd& d, int s, std::uint64_t max_subsets = 100000,
                                            std::uint64_t seed = 0)
{
    const auto nbar = static_cast<int>(d.cols());
    if (s < 1 || s > nbar) throw StructuralError("sparse_coercivity: need 1 <= s <= column count");

    CoercivityEstimate est;
    est.delta = std::numeric_limits<double>::infinity();
    auto visit = [&](const std::vector<int>& subset) {
        est.delta = std::min(est.delta, smallest_singular_value(d(Eigen::all, subset)));
        ++est.subsets_evaluated;
    };

    if (binomial(nbar, s) <= static_cast<double>(max_subsets)) {
        std::vector<int> subset(static_cast<std::size_t>(s));
        std::iota(subset.begin(), subset.end(), 0);
        while (true) {
            visit(subset);
            int pos = s - 1;
            while (pos >= 0 && subset[static_cast<std::size_t>(pos)] == nbar - s + pos) --pos;
            if (pos < 0) break;
            ++subset[static_cast<std::size_t>(pos)];
            for (int q = pos + 1; q < s; ++q) subset[static_cast<std::size_t>(q)] = subset[static_cast<std::size_t>(q) - 1] + 1;
        }
    } else {
        est.exhaustive = false;
        std::mt19937_64 rng(seed);
        std::vector<int> all(static_cast<std::size_t>(nbar));
        std::iota(all.begin(), all.end(), 0);
        for (std::uint64_t t = 0; t < max_subsets; ++t) {
            std::vector<int> subset;
            std::sample(all.begin(), all.end(), std::back_inserter(subset), s, rng);
            visit(subset);
        }
    }
    return est;
}

struct DegeneracyFlag
{
    int degree = 0;
    double ratio = 0.0;
    bool operator==(const DegeneracyFlag&) const = default;
};

struct SourceDiagnostics
{
    int source = 0; ///< 1-based
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double ratio = 0.0;
    bool full_rank = false;
    std::vector<double> degree_ratios; ///< index q: sigma ratio of the columns up to degree q
    std::vector<DegeneracyFlag> flags;

    /// Lowest flagged degree, or -1.
    int lowest_flagged_degree() const { return flags.empty() ? -1 : flags.front().degree; }
    bool flagged_at(int degree) const
    {
        return std::any_of(flags.begin(), flags.end(), [&](const DegeneracyFlag& f) { return f.degree == degree; });
    }
};

struct DegeneracyReport
{
    double tolerance = 1e-8;
    std::vector<SourceDiagnostics> sources;

    bool any_flagged() const
    {
        return std::any_of(sources.begin(), sources.end(),
                           [](const SourceDiagnostics& s) { return !s.flags.empty() || !s.full_rank; });
    }
};

/// Conditioning of each source's dictionary and of its degree-q prefixes.
///
/// A prefix whose sigma_min / sigma_max falls below `tolerance` means the samples
/// lie (nearly) on an algebraic hypersurface of degree q.
inline DegeneracyReport degeneracy_warning(const std::vector<Eigen::MatrixXd>& dictionaries,
                                           const DictionarySpec& spec, double tolerance = 1e-8)
{
    if (!(tolerance > 0.0)) throw StructuralError("degeneracy_warning: tolerance must be positive");
    DegeneracyReport report;
    report.tolerance = tolerance;
    for (std::size_t i = 0; i < dictionaries.size(); ++i) {
        const auto& d = dictionaries[i];
        if (d.cols() != static_cast<Eigen::Index>(spec.size())) {
            throw StructuralError("degeneracy_warning: dictionary does not match spec");
        }
        SourceDiagnostics sd;
        sd.source = static_cast<int>(i) + 1;
        const auto full = full_rank_check(d);
        sd.sigma_min = full.sigma_min;
        sd.sigma_max = full.sigma_max;
        sd.ratio = full.ratio();
        sd.full_rank = full.full_rank;
        for (int q = 0; q <= spec.p; ++q) {
            const auto cols = static_cast<Eigen::Index>(spec.prefix_size(q));
            const double ratio = q == spec.p ? sd.ratio : full_rank_check(d.leftCols(cols)).ratio();
            sd.degree_ratios.push_back(ratio);
            if (q >= 1 && ratio < tolerance) sd.flags.push_back({q, ratio});
        }
        report.sources.push_back(std::move(sd));
    }
    return report;
}

inline DegeneracyReport degeneracy_warning(const RegressionProblem& problem, double tolerance = 1e-8)
{
    return degeneracy_warning(problem.dictionaries, problem.spec, tolerance);
}

inline void to_json(nlohmann::json& j, const DegeneracyFlag& f)
{
    j = nlohmann::json{{"degree", f.degree}, {"ratio", f.ratio}};
}

inline void to_json(nlohmann::json& j, const SourceDiagnostics& s)
{
    j = nlohmann::json{{"source", s.source},
                       {"sigma_min", s.sigma_min},
                       {"sigma_max", s.sigma_max},
                       {"ratio", s.ratio},
                       {"full_rank", s.full_rank},
                       {"degree_ratios", s.degree_ratios},
                       {"flags", s.flags}};
}

inline void to_json(nlohmann::json& j, const DegeneracyReport& r)
{
    j = nlohmann::json{{"tolerance", r.tolerance}, {"sources", r.sources}};
}

} // namespace gsid
