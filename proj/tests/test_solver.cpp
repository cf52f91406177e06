#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <gsid/dynamics.hpp>
#include <gsid/identification.hpp>
#include <gsid/solver.hpp>

#include "test_util.hpp"

using namespace gsid;

namespace {

RegressionProblem raw_problem(std::vector<Eigen::MatrixXd> d, std::vector<Eigen::VectorXd> v)
{
    RegressionProblem p;
    p.spec = enumerate_monomials(1, static_cast<int>(d.front().cols()) - 1);
    p.dictionaries = std::move(d);
    p.velocities = std::move(v);
    p.scale_factor = 1.0;
    return p;
}

SolverConfig group(double a)
{
    SolverConfig c;
    c.threshold = a;
    return c;
}

/// max_i ||D_S^T (D_S c_S - V)||_inf over each source's own support.
double normal_equation_residual(const RegressionProblem& p, const Eigen::MatrixXd& c)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < p.sources(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        std::vector<int> s;
        for (Eigen::Index k = 0; k < c.rows(); ++k) {
            if (c(k, col) != 0.0) s.push_back(static_cast<int>(k));
        }
        if (s.empty()) continue;
        const Eigen::MatrixXd ds = p.dictionaries[i](Eigen::all, s);
        const Eigen::VectorXd r = ds.transpose() * (p.dictionaries[i] * c.col(col) - p.velocities[i]);
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace

TEST(GroupThreshold, BoundaryIsInclusive)
{
    Eigen::MatrixXd c(3, 2);
    c << 3, 4, 0, 0, 1e-300, 0;
    const auto zero_a = group_threshold(c, 0.0);
    EXPECT_TRUE(zero_a == c);
    EXPECT_TRUE(group_threshold(c, 5.0).row(0).isZero(0.0));
    EXPECT_TRUE(group_threshold(c, 4.9).row(0) == c.row(0));
}

TEST(EntryThreshold, ActsPerEntry)
{
    Eigen::MatrixXd c(2, 2);
    c << 3, 0.5, -0.2, 2;
    Eigen::MatrixXd expected(2, 2);
    expected << 3, 0, 0, 2;
    EXPECT_TRUE(entry_threshold(c, 0.5) == expected);
}

TEST(GradientStep, HandComputedToy)
{
    Eigen::MatrixXd d(2, 2);
    d << 1, 0, 0, 0.5;
    const auto p = raw_problem({d}, {Eigen::VectorXd::Ones(2)});
    const auto out = gradient_step(p, Eigen::MatrixXd::Zero(2, 1));
    EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out(1, 0), 0.5);
}

TEST(GradientStep, ZeroStartAndFixedPoint)
{
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd d1 = test::random_matrix(rng, 6, 6), d2 = test::random_matrix(rng, 6, 6);
    const Eigen::MatrixXd c = test::random_matrix(rng, 6, 2);
    const auto p = raw_problem({d1, d2}, {d1 * c.col(0), d2 * c.col(1)});
    EXPECT_TRUE(gradient_step(p, c).isApprox(c, 1e-12));
    const auto z = gradient_step(p, Eigen::MatrixXd::Zero(6, 2));
    EXPECT_TRUE(z.col(0).isApprox(d1.transpose() * p.velocities[0], 1e-14));
    EXPECT_TRUE(z.col(1).isApprox(d2.transpose() * p.velocities[1], 1e-14));
    EXPECT_THROW(gradient_step(p, Eigen::MatrixXd::Zero(5, 2)), StructuralError);
}

TEST(RestrictedLeastSquares, SquareInvertibleIsExact)
{
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd d = test::random_matrix(rng, 5, 5);
    const Eigen::VectorXd c = test::random_matrix(rng, 5, 1);
    const Eigen::VectorXd v = d * c;
    const auto r = restricted_least_squares(d, v, {0, 1, 2, 3, 4});
    EXPECT_FALSE(r.rank_deficient);
    EXPECT_LE((d * r.coefficients - v).norm(), 1e-10 * v.norm());
}

TEST(RestrictedLeastSquares, EmptySupportGivesZero)
{
    const auto r = restricted_least_squares(Eigen::MatrixXd::Ones(4, 3), Eigen::VectorXd::Ones(4), {});
    EXPECT_TRUE(r.coefficients.isZero(0.0));
    EXPECT_EQ(r.coefficients.size(), 3);
}

TEST(RestrictedLeastSquares, MatchesNormalEquations)
{
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd d = test::random_matrix(rng, 10, 3);
    const Eigen::VectorXd v = test::random_matrix(rng, 10, 1);
    const auto r = restricted_least_squares(d, v, {0, 2});
    Eigen::MatrixXd ds(10, 2);
    ds << d.col(0), d.col(2);
    const Eigen::Vector2d oracle = (ds.transpose() * ds).inverse() * (ds.transpose() * v);
    EXPECT_NEAR(r.coefficients(0), oracle(0), 1e-10);
    EXPECT_EQ(r.coefficients(1), 0.0);
    EXPECT_NEAR(r.coefficients(2), oracle(1), 1e-10);
}

TEST(RestrictedLeastSquares, RankDeficientGivesMinimumNormAndFlag)
{
    Eigen::MatrixXd d(4, 2);
    d << 1, 1, 2, 2, 3, 3, 4, 4;
    const Eigen::VectorXd v = d.col(0) * 2.0;
    const auto r = restricted_least_squares(d, v, {0, 1});
    EXPECT_TRUE(r.rank_deficient);
    EXPECT_NEAR(r.coefficients(0), 1.0, 1e-10);
    EXPECT_NEAR(r.coefficients(1), 1.0, 1e-10);
    EXPECT_THROW(restricted_least_squares(d, v, {0, 2}), StructuralError);
    EXPECT_THROW(restricted_least_squares(d, Eigen::VectorXd::Ones(3), {0}), StructuralError);
}

TEST(Solve, NoiseFreeLogisticRecoversBothTerms)
{
    Eigen::VectorXd x0(1);
    x0 << 0.01;
    const auto prepared = prepare_sources({integrate(logistic(0.23), x0, 0.005, 50.0)}, 6);
    const auto result = solve(component_problem(prepared, 0), group(0.0018));
    EXPECT_EQ(result.coefficients.support(), (std::vector<int>{1, 2}));
    EXPECT_NEAR(result.coefficients.values()(1, 0), 0.23, 0.23e-3);
    EXPECT_NEAR(result.coefficients.values()(2, 0), -0.23, 0.23e-3);
    EXPECT_TRUE(result.trace.converged);
}

TEST(Solve, ZeroVelocityConvergesInOneIteration)
{
    std::mt19937_64 rng(4);
    const auto p = make_problem({test::random_matrix(rng, 10, 4)}, {Eigen::VectorXd::Zero(10)},
                                enumerate_monomials(1, 3));
    const auto r = solve(p, group(0.1));
    EXPECT_EQ(r.trace.iterations, 1);
    EXPECT_TRUE(r.trace.converged);
    EXPECT_TRUE(r.coefficients.values().isZero(0.0));
    EXPECT_TRUE(r.trace.zero_support);
}

TEST(Solve, OrthonormalToyRecoveredInOneIteration)
{
    std::mt19937_64 rng(5);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(test::random_matrix(rng, 8, 4));
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(8, 4);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
    c(2) = 3.0;
    const auto p = raw_problem({q}, {q * c});
    SolverConfig cfg = group(0.5);
    cfg.max_iter = 1;
    const auto r = solve(p, cfg);
    EXPECT_EQ(r.coefficients.support(), (std::vector<int>{2}));
    EXPECT_NEAR(r.coefficients.values()(2, 0), 3.0, 1e-12);
    EXPECT_NEAR(r.scaled(2, 0), 3.0, 1e-12);
}

TEST(Solve, MaxIterReachedIsNotAnError)
{
    std::mt19937_64 rng(6);
    const auto p = test::random_problem(rng, 10, 2, 20);
    SolverConfig cfg = group(0.01);
    cfg.max_iter = 1;
    const auto r = solve(p, cfg);
    EXPECT_FALSE(r.trace.converged);
    EXPECT_EQ(r.trace.iterations, 1);
}

TEST(Solve, HugeThresholdGivesZeroModel)
{
    std::mt19937_64 rng(7);
    const auto r = solve(test::random_problem(rng, 6, 2, 12), group(1e6));
    EXPECT_TRUE(r.trace.zero_support);
    EXPECT_EQ(r.coefficients.l20(), 0u);
}

TEST(Solve, RejectsBadShapesAndConfigs)
{
    std::mt19937_64 rng(8);
    const auto p = test::random_problem(rng, 5, 2, 10);
    EXPECT_THROW(solve(p, group(0.1), Eigen::MatrixXd::Zero(5, 1)), StructuralError);
    EXPECT_THROW(solve(p, group(-1.0)), StructuralError);
    SolverConfig bad = group(0.1);
    bad.tol = 0;
    EXPECT_THROW(solve(p, bad), StructuralError);
    bad = group(0.1);
    bad.variant = Variant::KsRows;
    EXPECT_THROW(solve(p, bad), StructuralError);
    bad.sparsity = 2;
    bad.k_factor = 1.0;
    EXPECT_THROW(solve(p, bad), StructuralError);
}

TEST(SolveProperty, DescentOnRandomProblems)
{
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> nb(2, 20), ms(1, 4), extra(0, 15);
    std::uniform_real_distribution<double> thr(0.0, 0.5);
    int runs = 0;
    for (int t = 0; t < 200; ++t) {
        const int nbar = nb(rng), m = ms(rng);
        const auto p = test::random_problem(rng, nbar, m, nbar + extra(rng), 0.1);
        for (auto variant : {Variant::GroupL20, Variant::PerSourceL0}) {
            for (auto init : {Initialization::Zero, Initialization::LeastSquares}) {
                SolverConfig cfg = group(thr(rng));
                cfg.variant = variant;
                cfg.init = init;
                const auto r = solve(p, cfg);
                ASSERT_LE(r.trace.max_increase(), 1e-9) << "trial " << t;
                ++runs;
            }
        }
    }
    EXPECT_EQ(runs, 800);
}

TEST(SolveProperty, FixedPointAndSharedSupportAtConvergence)
{
    std::mt19937_64 rng(10);
    for (int t = 0; t < 100; ++t) {
        const auto p = test::random_problem(rng, 12, 3, 30, 0.05);
        const SolverConfig cfg = group(0.05);
        const auto r = solve(p, cfg);
        if (!r.trace.converged) continue;
        const auto stepped = group_threshold(gradient_step(p, r.scaled), cfg.threshold);
        EXPECT_EQ(detail::nonzero_rows(stepped), detail::nonzero_rows(r.scaled));
        EXPECT_LE(normal_equation_residual(p, r.scaled), 1e-8);
        const auto& group_support = r.coefficients.support();
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (int k : r.coefficients.column_support(i)) {
                EXPECT_TRUE(std::binary_search(group_support.begin(), group_support.end(), k));
            }
        }
    }
}

TEST(SolveProperty, SmallInstancesAgainstBruteForce)
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> nb(2, 8), ms(1, 2), rows(0, 4);
    std::uniform_real_distribution<double> thr(0.02, 0.4);
    for (int t = 0; t < 50; ++t) {
        const int nbar = nb(rng);
        const auto p = test::random_problem(rng, nbar, ms(rng), nbar + rows(rng), 0.1);
        const SolverConfig cfg = group(thr(rng));
        const double gamma = cfg.gamma();
        const auto oracle = test::brute_force(p, gamma);

        // From zero: a local minimizer, optimal for its own support.
        const auto r = solve(p, cfg);
        const auto own = test::fit_on_support(p, r.trace.supports.back());
        EXPECT_NEAR(objective(p, r.scaled, gamma), objective(p, own, gamma), 1e-9);
        EXPECT_GE(objective(p, r.scaled, gamma), oracle.objective - 1e-9);

        // From the oracle: a fixed point.
        const auto fixed = solve(p, cfg, oracle.coefficients);
        EXPECT_EQ(fixed.trace.supports.back(), oracle.support) << "trial " << t;
        EXPECT_LE(normal_equation_residual(p, fixed.scaled), 1e-8);
        const double f = objective(p, fixed.scaled, gamma);
        for (int k = 0; k < nbar; ++k) {
            auto s = oracle.support;
            auto it = std::find(s.begin(), s.end(), k);
            if (it != s.end()) s.erase(it);
            else s.insert(std::upper_bound(s.begin(), s.end(), k), k);
            EXPECT_GE(objective(p, test::fit_on_support(p, s), gamma), f - 1e-9);
        }
    }
}

TEST(SolveProperty, ReportedCoefficientsIgnoreGlobalScale)
{
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
        std::vector<Eigen::MatrixXd> d;
        std::vector<Eigen::VectorXd> v;
        Eigen::VectorXd c = Eigen::VectorXd::Zero(6);
        c(1) = 2.0;
        c(4) = -1.5;
        for (int i = 0; i < 2; ++i) {
            d.push_back(test::random_matrix(rng, 15, 6));
            v.push_back(d.back() * c * (1.0 + i) + 0.01 * test::random_matrix(rng, 15, 1));
        }
        const auto spec = enumerate_monomials(1, 5);
        const auto base = solve(make_problem(d, v, spec), group(0.1));
        for (double kappa : {4.0, 3.7, 1e3}) {
            std::vector<Eigen::MatrixXd> dk;
            std::vector<Eigen::VectorXd> vk;
            for (int i = 0; i < 2; ++i) {
                dk.push_back(kappa * d[static_cast<std::size_t>(i)]);
                vk.push_back(kappa * v[static_cast<std::size_t>(i)]);
            }
            const auto r = solve(make_problem(dk, vk, spec), group(0.1));
            EXPECT_EQ(r.coefficients.support(), base.coefficients.support());
            EXPECT_TRUE(r.coefficients.values().isApprox(base.coefficients.values(), 1e-10));
            if (kappa == 4.0) {
                EXPECT_TRUE(r.coefficients == base.coefficients);
            }
        }
    }
}

TEST(PerSourceL0, SupportsMayDifferPerSource)
{
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd d1 = test::random_matrix(rng, 30, 5), d2 = test::random_matrix(rng, 30, 5);
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(5), c2 = Eigen::VectorXd::Zero(5);
    c1(0) = 3.0;
    c2(3) = -2.0;
    const auto p = make_problem({d1, d2}, {d1 * c1, d2 * c2}, enumerate_monomials(1, 4));
    SolverConfig cfg = group(0.05);
    cfg.variant = Variant::PerSourceL0;
    const auto r = solve(p, cfg);
    EXPECT_EQ(r.coefficients.column_support(0), (std::vector<int>{0}));
    EXPECT_EQ(r.coefficients.column_support(1), (std::vector<int>{3}));
    EXPECT_EQ(r.coefficients.support(), (std::vector<int>{0, 3}));
}

TEST(KsRows, FinalSupportHasExactlySRows)
{
    std::mt19937_64 rng(14);
    const Eigen::MatrixXd d = test::random_matrix(rng, 40, 10);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(10);
    c(2) = 1.0;
    c(7) = -2.0;
    c(9) = 0.5;
    const auto p = make_problem({d}, {d * c}, enumerate_monomials(1, 9));
    SolverConfig cfg;
    cfg.variant = Variant::KsRows;
    cfg.sparsity = 3;
    cfg.k_factor = 1.5;
    const auto r = solve(p, cfg);
    EXPECT_EQ(r.coefficients.support(), (std::vector<int>{2, 7, 9}));
    EXPECT_TRUE(r.coefficients.values().col(0).isApprox(c, 1e-10));
    for (std::size_t k = 1; k + 1 < r.trace.supports.size(); ++k) EXPECT_EQ(r.trace.supports[k].size(), 5u);
    EXPECT_EQ(r.trace.supports.back().size(), 3u);
}

TEST(KsRows, TiesGoToLowerIndex)
{
    Eigen::MatrixXd c(4, 1);
    c << 1.0, -2.0, 2.0, 2.0;
    EXPECT_EQ(detail::largest_rows(c, 2), (std::vector<int>{1, 2}));
    EXPECT_EQ(detail::largest_rows(c, 10), (std::vector<int>{0, 1, 2, 3}));
}

TEST(SolverTrace, CsvExport)
{
    SolverTrace t;
    t.objective = {2.5, 1.0};
    t.supports = {{0, 1, 2}, {1}};
    std::ostringstream os;
    write_trace_csv(os, t);
    EXPECT_EQ(os.str(), "iteration,F,support_size\n0,2.5,3\n1,1,1\n");
}

TEST(SolverConfig, ParsesNames)
{
    EXPECT_EQ(parse_variant("group-l20"), Variant::GroupL20);
    EXPECT_EQ(parse_variant("per-source-l0"), Variant::PerSourceL0);
    EXPECT_EQ(parse_variant("ks-rows"), Variant::KsRows);
    EXPECT_EQ(parse_initialization("least-squares"), Initialization::LeastSquares);
    EXPECT_THROW(parse_variant("lasso"), StructuralError);
    for (auto v : {Variant::GroupL20, Variant::PerSourceL0, Variant::KsRows}) EXPECT_EQ(parse_variant(to_string(v)), v);
}
