#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "stopflow/error.hpp"
#include "stopflow/mc.hpp"
#include "stopflow/value.hpp"

using namespace stopflow;

namespace {

const std::vector<double> kKnots{1.0, 2.0};
const std::vector<double> kSteps{-1.0, 1.0, -1.0};

// Driftless, constant sigma on (0, 4).
ProblemSpec brownian(double sigma) {
    ProblemSpec s;
    s.m = 0.0;
    s.M = 4.0;
    s.alpha = PiecewiseExpr::constant(0.0, 0, 4);
    s.sigma = PiecewiseExpr::constant(sigma, 0, 4);
    s.r = PiecewiseExpr::constant(0.5, 0, 4);
    s.pi = piecewise_constant(kKnots, kSteps, 0, 4);
    return s;
}

// alpha(x) = x, sigma(x) = x, so 2 alpha / sigma^2 = 2 / x and s'(z) = z^-2.
ProblemSpec gbm_unit() { return make_gbm_spec(1.0, 1.0, 1.0, piecewise_constant(kKnots, kSteps)); }

class ThreadsEnv {
public:
    explicit ThreadsEnv(const char* n) { setenv("STOPFLOW_THREADS", n, 1); }
    ~ThreadsEnv() { unsetenv("STOPFLOW_THREADS"); }
};

}  // namespace

TEST(Step, ExactGbmZeroShock) {
    EXPECT_DOUBLE_EQ(step_exact_gbm(1.7, 0.125, 0.5, 0.3, 0.0), 1.7);
}

TEST(Step, ExactGbmHandEvaluated) {
    EXPECT_NEAR(step_exact_gbm(1.0, 0.0, 1.0, 1.0, 1.0), std::exp(0.5), 1e-15);
}

TEST(Step, ExactGbmLognormalMean) {
    std::mt19937_64 gen(42);
    std::normal_distribution<double> normal;
    const double alpha = 0.3, sigma = 0.8, dt = 0.5;
    const int n = 1000000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double y = step_exact_gbm(1.0, alpha, sigma, dt, normal(gen));
        sum += y;
        sq += y * y;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - std::exp(alpha * dt)), 4 * se);
}

TEST(Step, EulerDeterministic) {
    const auto bm = validate(brownian(1.0));
    EXPECT_DOUBLE_EQ(step_euler(bm, 1.3, 0.01, 0.0), 1.3);
    const auto g = validate(gbm_unit());
    EXPECT_NEAR(step_euler(g, 2.0, 0.01, 0.0), 2.02, 1e-15);
    EXPECT_NEAR(step_euler(g, 2.0, 0.01, 1.0), 2.02 + 2.0 * 0.1, 1e-15);
}

TEST(Step, EulerClampFlagged) {
    const auto g = validate(gbm_unit());
    const Truncation w{0.5, 4.0};
    bool clamped = false;
    EXPECT_EQ(step_euler(g, 2.0, 0.01, -100.0, w, &clamped), w.lo);
    EXPECT_TRUE(clamped);
    clamped = false;
    step_euler(g, 2.0, 0.01, 0.1, w, &clamped);
    EXPECT_FALSE(clamped);
}

TEST(HittingProbability, DriftlessIsLinear) {
    const auto p = validate(brownian(0.7));
    EXPECT_NEAR(hitting_probability(p, 1, 3, 2), 0.5, 1e-12);
    EXPECT_NEAR(hitting_probability(p, 1, 3, 1.5), 0.25, 1e-12);
}

TEST(HittingProbability, GbmScaleDensity) {
    const auto p = validate(gbm_unit());
    EXPECT_NEAR(hitting_probability(p, 1, 4, 2), 2.0 / 3.0, 1e-12);
    for (double x : {1.0001, 1.5, 3.9999}) EXPECT_NEAR(hitting_probability(p, 1, 4, x), (1 - 1 / x) / 0.75, 1e-13);
}

TEST(HittingProbability, GeneralCoefficientsMatchQuadrature) {
    ProblemSpec s = gbm_unit();
    s.alpha = PiecewiseExpr({Segment{0, 2, {{0.5, 1}, {0.2, 0}}}, Segment{2, kInf, {{-0.3, 1}, {1.4, 0}}}});
    s.sigma = PiecewiseExpr({Segment{0, kInf, {{0.8, 1}, {0.3, 0.5}}}});
    const auto p = validate(s);
    ASSERT_FALSE(p.closed_form());
    using boost::math::quadrature::gauss_kronrod;
    auto drift = [&](double z) { return 2 * p.alpha(z) / (p.sigma(z) * p.sigma(z)); };
    auto inner = [&](double lo, double hi) {
        if (lo < 2 && hi > 2)
            return gauss_kronrod<double, 61>::integrate(drift, lo, 2, 10, 1e-13) +
                   gauss_kronrod<double, 61>::integrate(drift, 2, hi, 10, 1e-13);
        return gauss_kronrod<double, 61>::integrate(drift, lo, hi, 10, 1e-13);
    };
    auto dens = [&](double z) { return std::exp(-inner(0.8, z)); };
    auto scale = [&](double y) {
        if (y <= 2) return gauss_kronrod<double, 61>::integrate(dens, 0.8, y, 10, 1e-13);
        return gauss_kronrod<double, 61>::integrate(dens, 0.8, 2, 10, 1e-13) +
               gauss_kronrod<double, 61>::integrate(dens, 2, y, 10, 1e-13);
    };
    for (double x : {1.0, 1.9, 2.5, 3.7}) EXPECT_NEAR(hitting_probability(p, 0.8, 4.0, x), scale(x) / scale(4.0), 1e-9);
}

TEST(HittingProbability, RejectsBadOrdering) {
    const auto p = validate(gbm_unit());
    EXPECT_THROW(hitting_probability(p, 3, 1, 2), Error);
    EXPECT_THROW(hitting_probability(p, 1, 3, 5), Error);
    EXPECT_THROW(hitting_probability(p, 1, 3, 1), Error);
}

TEST(HittingFrequency, MatchesFormula) {
    PathConfig cfg;
    cfg.n_paths = 20000;
    cfg.seed = 3;
    const auto g = validate(gbm_unit());
    const auto exact = hitting_frequency(g, 1, 4, 2, cfg);
    EXPECT_LE(std::abs(exact.mean - 2.0 / 3.0), 3 * exact.std_error);
    cfg.scheme = Scheme::EulerMaruyama;
    const auto bm = validate(brownian(1.0));
    const auto euler = hitting_frequency(bm, 1, 3, 2, cfg);
    EXPECT_LE(std::abs(euler.mean - 0.5), 3 * euler.std_error);
}

TEST(Payoff, ImmediateStop) {
    const auto v = [] {
        const auto p = validate(fixture::ex1());
        return assemble(p, maximal_intervals(p));
    }();
    PathConfig cfg;
    cfg.n_paths = 1000;
    const auto est = simulate_payoff(v.problem(), stopping_region(v), 0.4, cfg);
    EXPECT_EQ(est.mean, 0.0);
    EXPECT_EQ(est.std_error, 0.0);
}

TEST(Payoff, OptimalAndSuboptimalRules) {
    const auto p = validate(fixture::ex1());
    const auto v = assemble(p, maximal_intervals(p));
    const double target = v(1.5).v;
    PathConfig cfg;
    cfg.n_paths = 20000;
    cfg.seed = 11;
    const auto w = v.window();
    const auto opt = simulate_payoff(p, stopping_region(v), 1.5, cfg);
    EXPECT_LE(std::abs(opt.mean - target), 3 * opt.std_error + 0.002);
    const StopRule shifted{{w.lo, 0.7}, {2.5, w.hi}};
    const auto sub = simulate_payoff(p, shifted, 1.5, cfg);
    EXPECT_LE(sub.mean, target + 3 * sub.std_error);
    EXPECT_LT(sub.mean, opt.mean);
}

TEST(Payoff, IndependentOfThreadCount) {
    const auto p = validate(fixture::ex1());
    const StopRule rule{{1e-3, 0.5}, {2.5, 1e3}};
    PathConfig cfg;
    cfg.n_paths = 3000;
    cfg.dt = 1e-2;
    McEstimate one, many;
    {
        ThreadsEnv env("1");
        one = simulate_payoff(p, rule, 1.5, cfg);
    }
    {
        ThreadsEnv env("7");
        many = simulate_payoff(p, rule, 1.5, cfg);
    }
    EXPECT_EQ(one.mean, many.mean);
    EXPECT_EQ(one.std_error, many.std_error);
    cfg.seed = 2;
    EXPECT_NE(simulate_payoff(p, rule, 1.5, cfg).mean, one.mean);
}

TEST(Payoff, HorizonTruncationReported) {
    const auto p = validate(fixture::ex1());
    PathConfig cfg;
    cfg.n_paths = 200;
    cfg.horizon = 0.01;
    const auto est = simulate_payoff(p, StopRule{{1e-3, 0.5}, {2.5, 1e3}}, 1.5, cfg);
    EXPECT_GT(est.truncated_fraction, 0.9);
}

TEST(Rule, Membership) {
    const StopRule rule{{0.0, 0.5}, {2.5, 3.0}};
    EXPECT_TRUE(in_rule(rule, 0.5));
    EXPECT_TRUE(in_rule(rule, 2.5));
    EXPECT_FALSE(in_rule(rule, 1.0));
    EXPECT_FALSE(in_rule(rule, 0.51));
    EXPECT_TRUE(in_rule(rule, 0.51, 0.02));
}

TEST(PairwiseSum, ExactOnRepresentableData) {
    std::vector<double> v(1 << 20, 0.1);
    const double naive_err = [&] {
        double s = 0;
        for (double x : v) s += x;
        return std::abs(s - 0.1 * v.size());
    }();
    const double pw_err = std::abs(pairwise_sum(v.data(), v.size()) - 0.1 * v.size());
    EXPECT_LT(pw_err, naive_err);
    EXPECT_LT(pw_err, 1e-9);
    EXPECT_EQ(pairwise_sum(v.data(), 0), 0.0);
}
