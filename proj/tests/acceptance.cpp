#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gsid/gsid.hpp>

#include "test_util.hpp"

using namespace gsid;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome
{
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what)
    {
        pass = pass && ok;
        notes.push_back((ok ? "ok: " : "FAILED: ") + what);
    }
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

bool report(int id, const std::string& title, Outcome o, double elapsed, double budget)
{
    o.check(elapsed < budget, "runtime " + fmt("%.2f", elapsed) + " s < " + fmt("%g", budget) + " s");
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title << '\n';
    for (const auto& n : o.notes) std::cout << "    " << n << '\n';
    std::cout.flush();
    return o.pass;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

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

double worst_increase(const ExperimentReport& r)
{
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& s : r.summaries) worst = std::max(worst, s.max_objective_increase);
    return worst;
}

// ---------------------------------------------------------------- 1, 2

struct LogisticRun
{
    ExperimentReport report;
    double elapsed = 0.0;
};

LogisticRun logistic_run()
{
    auto c = logistic_config();
    c.record_traces = true;
    const auto t0 = Clock::now();
    LogisticRun r{run_trials(c), 0.0};
    r.elapsed = seconds_since(t0);
    return r;
}

bool criterion1(const LogisticRun& run)
{
    Outcome o;
    const auto* g = run.report.summary(Variant::GroupL20);
    o.check(g && g->recovery_probability >= 0.95,
            "group P = " + fmt("%.2f", g ? g->recovery_probability : 0.0) + " >= 0.95 over N = " +
                std::to_string(run.report.trials));
    if (g) o.notes.push_back("group mean relative error " + fmt("%.4f", g->mean_error_pct) + "%");
    return report(1, "logistic recovery", o, run.elapsed, 30.0);
}

bool criterion2(const LogisticRun& run)
{
    Outcome o;
    const auto* g = run.report.summary(Variant::GroupL20);
    const auto* l = run.report.summary(Variant::PerSourceL0);
    const double pg = g ? g->recovery_probability : 0.0;
    const double pl = l ? l->recovery_probability : 1.0;
    o.check(l != nullptr && pl <= 0.7, "per-source-l0 P = " + fmt("%.2f", pl) + " <= 0.7");
    o.check(pg - pl >= 0.2, "P_group - P_l0 = " + fmt("%.2f", pg - pl) + " >= 0.2");
    return report(2, "logistic per-source-l0 gap", o, run.elapsed, 30.0);
}

// ---------------------------------------------------------------- 3

struct LorenzRun
{
    ExperimentReport noisy;
    double noisy_increase = 0.0;
    bool pass = false;
};

LorenzRun criterion3()
{
    Outcome o;
    const auto t0 = Clock::now();
    LorenzRun out;

    auto clean = lorenz_regimes_config();
    clean.trials = 1;
    for (auto& s : clean.sources) s.noise = 0.0;
    const auto single = lorenz_regimes_experiment(clean);
    const auto& table = single.table;
    double worst = 0.0;
    std::string worst_at;
    for (Eigen::Index r = 0; r < table.truth.rows(); ++r) {
        for (Eigen::Index i = 0; i < table.truth.cols(); ++i) {
            const double truth = table.truth(r, i);
            if (truth == 0.0) continue;
            const double err = 100.0 * std::abs(table.estimated(r, i) - truth) / std::abs(truth);
            if (err > worst) {
                worst = err;
                worst_at = table.terms[static_cast<std::size_t>(r)] + " set " + std::to_string(i + 1);
            }
        }
    }
    const bool clean_support = single.output.report.summaries.at(0).matches == 1;
    o.check(clean_support, "noise-free single trial recovers every support");
    o.check(worst <= 0.5, "noise-free component-2 worst relative error " + fmt("%.4f", worst) + "% (" + worst_at +
                              ") <= 0.5%");

    auto noisy = lorenz_regimes_config();
    noisy.record_traces = true;
    const auto result = lorenz_regimes_experiment(noisy);
    out.noisy = result.output.report;
    const auto& s = out.noisy.summaries.at(0);
    o.check(s.recovery_probability >= 0.9, "noisy P = " + fmt("%.2f", s.recovery_probability) + " >= 0.9 over N = " +
                                                std::to_string(out.noisy.trials));
    for (std::size_t i = 0; i < s.mean_source_error_pct.size(); ++i) {
        const double bound = i == 0 ? 5.0 : 1.0;
        o.check(s.mean_source_error_pct[i] <= bound, "set " + std::to_string(i + 1) + " mean relative error " +
                                                         fmt("%.4f", s.mean_source_error_pct[i]) + "% <= " +
                                                         fmt("%g", bound) + "%");
    }
    out.noisy_increase = worst_increase(out.noisy);
    out.pass = report(3, "Lorenz five-regime recovery", o, seconds_since(t0), 300.0);
    return out;
}

// ---------------------------------------------------------------- 4

bool criterion4()
{
    Outcome o;
    const auto t0 = Clock::now();
    const auto r = switching_experiment(SwitchingConfig{});
    o.check(r.switch_segment == r.true_switch_segment, "max-residual segment " + std::to_string(r.switch_segment) +
                                                           " == segment holding t_switch " +
                                                           std::to_string(r.true_switch_segment));
    int good = 0, others = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < r.regime.size(); ++i) {
        if (static_cast<int>(i) + 1 == r.switch_segment) continue;
        ++others;
        if (r.support_correct[i] && r.max_rel_error_pct[i] <= 2.0) ++good;
        worst = std::max(worst, r.max_rel_error_pct[i]);
    }
    o.check(good == others, std::to_string(good) + " of " + std::to_string(others) +
                                " other segments carry {x1, x2, x1*x3} within 2% (worst " + fmt("%.3f", worst) + "%)");
    return report(4, "switching localization", o, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------- 5

bool criterion5(const LogisticRun& logistic, const LorenzRun& lorenz)
{
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240501);
    std::uniform_int_distribution<int> nb(2, 20), ms(1, 4), extra(0, 15);
    std::uniform_real_distribution<double> thr(0.0, 0.5);
    double worst = -std::numeric_limits<double>::infinity();
    int runs = 0;
    for (int t = 0; t < 200; ++t) {
        const int nbar = nb(rng), m = ms(rng);
        const auto p = test::random_problem(rng, nbar, m, nbar + extra(rng), 0.1);
        for (auto variant : {Variant::GroupL20, Variant::PerSourceL0}) {
            for (auto init : {Initialization::Zero, Initialization::LeastSquares}) {
                SolverConfig cfg;
                cfg.threshold = thr(rng);
                cfg.variant = variant;
                cfg.init = init;
                worst = std::max(worst, solve(p, cfg).trace.max_increase());
                ++runs;
            }
        }
    }
    o.check(worst <= 1e-9, std::to_string(runs) + " random solves: largest objective increase " + fmt("%.3e", worst));

    const double li = worst_increase(logistic.report);
    o.check(li <= 1e-9, "logistic experiment traces: largest increase " + fmt("%.3e", li));
    o.check(lorenz.noisy_increase <= 1e-9, "Lorenz experiment traces: largest increase " + fmt("%.3e", lorenz.noisy_increase));

    SwitchingConfig sw;
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(sw.x0.data(), 3);
    const auto series = simulate_switching(sw.alpha_before, sw.alpha_after, x0, sw.dt, sw.switch_time(), sw.t_final);
    const auto prepared = prepare_sources(split_into_segments(series, sw.segments), sw.degree);
    double sw_worst = -std::numeric_limits<double>::infinity();
    for (const auto& cm : identify(prepared, sw.solver).components) {
        for (std::size_t k = 1; k < cm.objective_trace.size(); ++k) {
            sw_worst = std::max(sw_worst, cm.objective_trace[k] - cm.objective_trace[k - 1]);
        }
    }
    o.check(sw_worst <= 1e-9, "switching group fit traces: largest increase " + fmt("%.3e", sw_worst));
    return report(5, "descent property", o, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------- 6

bool criterion6()
{
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> nb(2, 8), ms(1, 2), rows(0, 4);
    std::uniform_real_distribution<double> thr(0.02, 0.4);
    int fixed_points = 0, optimal = 0, local = 0;
    double worst_residual = 0.0;
    const int instances = 50;
    for (int t = 0; t < instances; ++t) {
        const int nbar = nb(rng);
        const auto p = test::random_problem(rng, nbar, ms(rng), nbar + rows(rng), 0.1);
        SolverConfig cfg;
        cfg.threshold = thr(rng);
        const double gamma = cfg.gamma();
        const auto oracle = test::brute_force(p, gamma);

        const auto from_zero = solve(p, cfg);
        if (objective(p, from_zero.scaled, gamma) >= oracle.objective - 1e-9) ++optimal;

        const auto fixed = solve(p, cfg, oracle.coefficients);
        const double res = normal_equation_residual(p, fixed.scaled);
        worst_residual = std::max(worst_residual, res);
        if (fixed.trace.supports.back() == oracle.support && res <= 1e-8) ++fixed_points;

        bool no_flip = true;
        for (int k = 0; k < nbar; ++k) {
            auto s = oracle.support;
            auto it = std::find(s.begin(), s.end(), k);
            if (it != s.end()) s.erase(it);
            else s.insert(std::upper_bound(s.begin(), s.end(), k), k);
            if (objective(p, test::fit_on_support(p, s), gamma) < oracle.objective - 1e-9) no_flip = false;
        }
        if (no_flip) ++local;
    }
    o.check(optimal == instances, std::to_string(optimal) + "/50 solver runs from zero are not below the enumerated minimum");
    o.check(fixed_points == instances, std::to_string(fixed_points) + "/50 oracle supports are fixed points (worst normal-equation residual " +
                                           fmt("%.2e", worst_residual) + ")");
    o.check(local == instances, std::to_string(local) + "/50 oracle supports admit no improving single-row flip");
    return report(6, "small-instance oracle", o, seconds_since(t0), 120.0);
}

// ---------------------------------------------------------------- 7

bool criterion7()
{
    Outcome o;
    const auto t0 = Clock::now();
    auto vandermonde = [](const std::vector<double>& pts, int degree) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(pts.size()), 1);
        for (std::size_t k = 0; k < pts.size(); ++k) x(static_cast<Eigen::Index>(k), 0) = pts[k];
        return build_dictionary(x, enumerate_monomials(1, degree));
    };
    o.check(full_rank_check(vandermonde({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}, 6)).full_rank,
            "distinct-point Vandermonde is full rank");
    o.check(!full_rank_check(vandermonde({0.1, 0.2, 0.3, 0.3, 0.5, 0.6, 0.7}, 6)).full_rank,
            "duplicated point is flagged singular");
    bool positive = true;
    for (int s = 1; s <= 4; ++s) {
        std::vector<double> pts;
        for (int k = 0; k < s; ++k) pts.push_back(0.5 + 0.75 * k);
        const auto est = sparse_coercivity(vandermonde(pts, 6), s);
        positive = positive && est.exhaustive && est.delta > 0.0;
    }
    o.check(positive, "exhaustive sparse coercivity > 0 for s = 1..4 distinct positive points");

    Eigen::VectorXd u0(3);
    u0 << 1.0, 1.0, 2.0;
    const auto series = integrate(lorenz(7.73), u0, 0.005, 10.0);
    const auto spec = enumerate_monomials(3, 4);
    const auto diag = degeneracy_warning({build_dictionary(series.states(), spec)}, spec);
    const auto& sd = diag.sources.at(0);
    o.check(sd.flagged_at(2), "limit-cycle data (alpha = 7.73, U0 = [1,1,2], T = 10) flagged at degree 2: degree-2 ratio " +
                                  fmt("%.3e", sd.degree_ratios.at(2)) + " vs tolerance " + fmt("%g", diag.tolerance));
    return report(7, "coercivity checks", o, seconds_since(t0), 60.0);
}

// ---------------------------------------------------------------- 8

bool criterion8()
{
    Outcome o;
    const auto t0 = Clock::now();
    {
        const double dt = 0.01;
        const int count = 200;
        std::vector<double> times;
        Eigen::MatrixXd x(count, 2);
        for (int k = 0; k < count; ++k) {
            const double t = k * dt;
            times.push_back(t);
            x(k, 0) = 2.0 - 3.0 * t;
            x(k, 1) = 0.5 * t * t - t;
        }
        const auto d = central_difference(SourceSeries(dt, times, x));
        double worst = 0.0;
        for (Eigen::Index k = 0; k < d.velocities.rows(); ++k) {
            const double t = times[static_cast<std::size_t>(k + 1)];
            worst = std::max({worst, std::abs(d.velocities(k, 0) + 3.0), std::abs(d.velocities(k, 1) - (t - 1.0))});
        }
        o.check(worst <= 1e-9, "central difference exact on affine and quadratic samples (max error " + fmt("%.2e", worst) + ")");
    }
    {
        std::mt19937_64 rng(5);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Eigen::MatrixXd d = test::random_matrix(rng, 30, 10);
            const Eigen::VectorXd v = test::random_matrix(rng, 30, 1);
            std::vector<int> support;
            for (int k = 0; k < 10; ++k) {
                if ((t + k) % 3 != 0) support.push_back(k);
            }
            const Eigen::MatrixXd ds = d(Eigen::all, support);
            const Eigen::VectorXd oracle = (ds.transpose() * ds).llt().solve(ds.transpose() * v);
            const Eigen::VectorXd got = restricted_least_squares(d, v, support).coefficients;
            for (std::size_t q = 0; q < support.size(); ++q) {
                worst = std::max(worst, std::abs(got(support[q]) - oracle(static_cast<Eigen::Index>(q))));
            }
        }
        o.check(worst <= 1e-10, "restricted least squares vs normal equations: max difference " + fmt("%.2e", worst));
    }
    {
        bool counts = true;
        for (int n = 1; n <= 5; ++n) {
            for (int p = 0; p <= 8; ++p) counts = counts && static_cast<double>(enumerate_monomials(n, p).size()) == binomial(n + p, n);
        }
        o.check(counts, "monomial counts equal binomial(n + p, n) for n <= 5, p <= 8");
    }
    {
        test::TempDir tmp("accept");
        auto c = logistic_config();
        c.trials = 20;
        c.record_traces = true;
        emit_report(run_experiment(c), tmp / "a");
        emit_report(run_experiment(c), tmp / "b");
        const auto a = slurp(tmp / "a" / "report.json");
        o.check(!a.empty() && a == slurp(tmp / "b" / "report.json"), "repeated seeded runs give byte-identical report.json");
    }
    return report(8, "numerical plumbing", o, seconds_since(t0), 60.0);
}

} // namespace

int main()
{
    const auto logistic = logistic_run();
    int failed = 0;
    failed += !criterion1(logistic);
    failed += !criterion2(logistic);
    const auto lorenz = criterion3();
    failed += !lorenz.pass;
    failed += !criterion4();
    failed += !criterion5(logistic, lorenz);
    failed += !criterion6();
    failed += !criterion7();
    failed += !criterion8();
    std::cout << (8 - failed) << " of 8 criteria passed\n";
    return failed == 0 ? 0 : 1;
}
