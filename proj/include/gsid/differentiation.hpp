#pragma once
#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include <gsid/core_model.hpp>
#include <gsid/errors.hpp>

namespace gsid {

struct DifferencedSeries
{
    Eigen::MatrixXd states;     // interior samples 2..l-1
    Eigen::MatrixXd velocities; // aligned with `states`
};

/// Second-order central differences; the two endpoints are dropped.
inline DifferencedSeries central_difference(const SourceSeries& series)
{
    const Eigen::Index l = series.length();
    if (l < 3) throw StructuralError("central_difference: need at least 3 samples");
    const auto& x = series.states();
    DifferencedSeries out;
    out.states = x.middleRows(1, l - 2);
    out.velocities = (x.bottomRows(l - 2) - x.topRows(l - 2)) / (2.0 * series.dt());
    return out;
}

/// Adds i.i.d. Gaussian noise; column c gets standard deviation sigma * RMS(column c).
inline Eigen::MatrixXd add_noise(const Eigen::MatrixXd& velocities, double sigma, std::uint64_t seed)
{
    if (!(sigma >= 0.0)) throw StructuralError("add_noise: sigma must be non-negative");
    Eigen::MatrixXd out = velocities;
    if (sigma == 0.0 || velocities.size() == 0) return out;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double rms = std::sqrt(velocities.col(c).squaredNorm() / static_cast<double>(velocities.rows()));
        const double stddev = sigma * rms;
        for (Eigen::Index k = 0; k < out.rows(); ++k) out(k, c) += stddev * normal(rng);
    }
    return out;
}

} // namespace gsid
