#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <gsid/errors.hpp>

namespace gsid {

/// Exponent vector of a monomial; entry d is the power of x_{d+1}.
using MultiIndex = std::vector<int>;

/// Column layout of a polynomial dictionary.
///
/// Monomials are sorted by ascending total degree and, within one degree,
/// in lexicographic order with x1 > x2 > ... > xn, so the layout reads
/// 1, x1, ..., xn, x1^2, x1*x2, ..., xn^p. Column 0 is always the constant.
struct DictionarySpec
{
    int n = 0;
    int p = 0;
    std::vector<MultiIndex> multi_indices;

    std::size_t size() const noexcept { return multi_indices.size(); }

    /// Column index of a multi-index, or -1 if absent.
    int index_of(const MultiIndex& alpha) const
    {
        auto it = std::find(multi_indices.begin(), multi_indices.end(), alpha);
        return it == multi_indices.end() ? -1 : static_cast<int>(it - multi_indices.begin());
    }

    /// Number of columns with total degree <= q (a prefix of the layout).
    std::size_t prefix_size(int q) const
    {
        std::size_t count = 0;
        for (const auto& alpha : multi_indices) {
            if (std::accumulate(alpha.begin(), alpha.end(), 0) <= q) ++count;
        }
        return count;
    }

    bool operator==(const DictionarySpec&) const = default;
};

inline int total_degree(const MultiIndex& alpha)
{
    return std::accumulate(alpha.begin(), alpha.end(), 0);
}

namespace detail {

inline void append_degree(int n, int remaining, int var, MultiIndex& current,
                          std::vector<MultiIndex>& out)
{
    if (var == n - 1) {
        current[var] = remaining;
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[var] = e;
        append_degree(n, remaining - e, var + 1, current, out);
    }
    current[var] = 0;
}

} // namespace detail

/// All monomials in n variables with total degree <= p, binomial(n+p, n) of them.
inline DictionarySpec enumerate_monomials(int n, int p)
{
    if (n < 1 || p < 0) {
        throw StructuralError("enumerate_monomials: need n >= 1 and p >= 0");
    }
    DictionarySpec spec;
    spec.n = n;
    spec.p = p;
    MultiIndex current(static_cast<std::size_t>(n), 0);
    for (int degree = 0; degree <= p; ++degree) {
        detail::append_degree(n, degree, 0, current, spec.multi_indices);
    }
    return spec;
}

/// Human-readable monomial name: "1", "x2", "x1^2*x3".
inline std::string term_name(std::span<const int> alpha)
{
    std::string name;
    for (std::size_t d = 0; d < alpha.size(); ++d) {
        if (alpha[d] == 0) continue;
        if (!name.empty()) name += '*';
        name += 'x' + std::to_string(d + 1);
        if (alpha[d] > 1) name += '^' + std::to_string(alpha[d]);
    }
    return name.empty() ? std::string("1") : name;
}

inline std::string term_name(const MultiIndex& alpha)
{
    return term_name(std::span<const int>(alpha.data(), alpha.size()));
}

/// Evaluates every monomial of `spec` on the rows of `states` (l x n -> l x nbar).
inline Eigen::MatrixXd build_dictionary(const Eigen::MatrixXd& states, const DictionarySpec& spec)
{
    if (states.cols() != spec.n) {
        throw StructuralError("build_dictionary: states have " + std::to_string(states.cols()) +
                              " columns, dictionary expects n = " + std::to_string(spec.n));
    }
    const Eigen::Index rows = states.rows();

    // powers[d] holds columns x_d^0 .. x_d^p
    std::vector<Eigen::MatrixXd> powers(static_cast<std::size_t>(spec.n));
    for (int d = 0; d < spec.n; ++d) {
        auto& pw = powers[static_cast<std::size_t>(d)];
        pw.resize(rows, spec.p + 1);
        pw.col(0).setOnes();
        for (int e = 1; e <= spec.p; ++e) {
            pw.col(e) = pw.col(e - 1).cwiseProduct(states.col(d));
        }
    }

    Eigen::MatrixXd dictionary(rows, static_cast<Eigen::Index>(spec.size()));
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const auto& alpha = spec.multi_indices[j];
        auto column = dictionary.col(static_cast<Eigen::Index>(j));
        column.setOnes();
        for (int d = 0; d < spec.n; ++d) {
            const int e = alpha[static_cast<std::size_t>(d)];
            if (e > 0) column.array() *= powers[static_cast<std::size_t>(d)].col(e).array();
        }
    }
    return dictionary;
}

/// Largest singular value of `matrix`, from power iteration on the Gram matrix.
///
/// Iterates until the Rayleigh quotient changes by less than `rel_tol` relative.
inline double spectral_norm(const Eigen::MatrixXd& matrix, double rel_tol = 1e-10, int max_iter = 100000)
{
    if (matrix.size() == 0) return 0.0;
    const Eigen::MatrixXd gram = matrix.transpose() * matrix;
    const Eigen::Index k = gram.rows();

    // Slightly non-uniform start so that no eigenvector is missed by symmetry.
    Eigen::VectorXd v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = 1.0 + 1e-3 * static_cast<double>(i + 1) / static_cast<double>(k);
    v.normalize();

    double lambda = v.dot(gram * v);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = gram * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        const double next = v.dot(gram * v);
        const bool done = std::abs(next - lambda) <= rel_tol * std::abs(next);
        lambda = next;
        if (done) break;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

struct RescaleResult
{
    std::vector<Eigen::MatrixXd> dictionaries;
    double scale_factor = 1.0;
};

/// Scales all dictionaries by one factor 1 / max_i ||D_i||_2, so that every
/// (D_i)^T D_i has spectral norm at most one.
inline RescaleResult rescale(const std::vector<Eigen::MatrixXd>& dictionaries)
{
    double largest = 0.0;
    for (const auto& d : dictionaries) largest = std::max(largest, spectral_norm(d));
    if (!(largest > 0.0) || !std::isfinite(largest)) {
        throw StructuralError("rescale: all dictionaries are zero (or non-finite)");
    }
    RescaleResult result;
    result.scale_factor = 1.0 / largest;
    result.dictionaries.reserve(dictionaries.size());
    for (const auto& d : dictionaries) result.dictionaries.push_back(result.scale_factor * d);
    return result;
}

inline void to_json(nlohmann::json& j, const DictionarySpec& spec)
{
    j = nlohmann::json{{"n", spec.n}, {"p", spec.p}, {"multi_indices", spec.multi_indices}};
}

inline void from_json(const nlohmann::json& j, DictionarySpec& spec)
{
    spec.n = j.at("n").get<int>();
    spec.p = j.at("p").get<int>();
    spec.multi_indices = j.at("multi_indices").get<std::vector<MultiIndex>>();
    for (const auto& alpha : spec.multi_indices) {
        if (alpha.size() != static_cast<std::size_t>(spec.n)) {
            throw StructuralError("DictionarySpec: multi-index length differs from n");
        }
    }
}

} // namespace gsid
