#include <gtest/gtest.h>

#include <boost/numeric/odeint.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stopflow/error.hpp"
#include "stopflow/fundmat.hpp"

using namespace stopflow;

namespace {

// Non-GBM problem on (0, inf) with breakpoints in alpha and sigma.
ProblemSpec rough_spec() {
    ProblemSpec s;
    s.alpha = PiecewiseExpr({Segment{0, 1.5, {{0.3, 1}}}, Segment{1.5, kInf, {{0.1, 0}, {-0.2, 1}}}});
    s.sigma = PiecewiseExpr({Segment{0, 2.5, {{1, 1}}}, Segment{2.5, kInf, {{0.5, 1}, {0.25, 1.5}}}});
    s.r = PiecewiseExpr::constant(0.4, 0, kInf);
    s.pi = fixture::ex1().pi;
    return s;
}

double log_det_integral(const Problem& p, double a, double b) {
    using boost::math::quadrature::gauss_kronrod;
    std::vector<double> cuts{a};
    for (double k : p.breakpoints())
        if (k > a && k < b) cuts.push_back(k);
    cuts.push_back(b);
    double s = 0;
    for (std::size_t i = 1; i < cuts.size(); ++i)
        s += gauss_kronrod<double, 61>::integrate(
            [&](double x) { return -2 * p.alpha(x) / (p.sigma(x) * p.sigma(x)); }, cuts[i - 1], cuts[i], 15, 1e-14);
    return s;
}

void expect_close(const Mat2& m, const std::array<double, 4>& ref, double tol) {
    EXPECT_NEAR(m.phi11, ref[0], tol * std::max(1.0, std::abs(ref[0])));
    EXPECT_NEAR(m.phi12, ref[1], tol * std::max(1.0, std::abs(ref[1])));
    EXPECT_NEAR(m.phi21, ref[2], tol * std::max(1.0, std::abs(ref[2])));
    EXPECT_NEAR(m.phi22, ref[3], tol * std::max(1.0, std::abs(ref[3])));
}

}  // namespace

TEST(PhiGbm, IdentityOnDiagonal) {
    const auto m = phi_gbm(-2, -1, 2, 2);
    EXPECT_DOUBLE_EQ(m.phi11, 1);
    EXPECT_DOUBLE_EQ(m.phi12, 0);
    EXPECT_DOUBLE_EQ(m.phi21, 0);
    EXPECT_DOUBLE_EQ(m.phi22, 1);
}

TEST(PhiGbm, HandEvaluated) {
    const auto m = phi_gbm(-2, -1, 1, 2);
    EXPECT_NEAR(m.phi12, 0.25, 1e-15);
    EXPECT_NEAR(m.phi11, 0.75, 1e-15);
}

TEST(PhiGbm, MatchesOdeint) {
    const auto p = validate(fixture::ex1());
    for (auto [a, b] : {std::pair{1.0, 2.0}, {0.3, 4.0}, {2.5, 0.7}, {1.0, 50.0}}) {
        expect_close(phi_gbm(-2, -1, a, b), oracle::phi_odeint(p, a, b), 1e-9);
    }
}

TEST(PhiGbm, RequiresPositiveArguments) {
    try {
        phi_gbm(-2, -1, 0.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonPositiveState);
    }
}

TEST(PhiGbm, ComplexRootsPhi12ChangesSign) {
    // Oscillatory case: phi12(1, y) has zeros, so positivity fails there.
    bool neg = false;
    for (double y = 1.01; y < 1e4; y *= 1.1) neg = neg || phi_gbm_complex(-0.5, 3.0, 1.0, y).phi12 < 0;
    EXPECT_TRUE(neg);
}

TEST(FundamentalMatrix, AutoModeUsesClosedForm) {
    EXPECT_EQ(FundamentalMatrix(validate(fixture::ex1())).mode(), FundMode::GbmClosedForm);
    EXPECT_EQ(FundamentalMatrix(validate(fixture::numerical(fixture::ex1()))).mode(), FundMode::Numerical);
}

TEST(FundamentalMatrix, NumericalMatchesClosedForm) {
    const FundamentalMatrix fm(validate(fixture::numerical(fixture::ex1())));
    const auto i = phi(fm, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(i.phi11, 1);
    EXPECT_DOUBLE_EQ(i.phi12, 0);
    for (auto [a, b] : {std::pair{1.0, 2.0}, {0.3, 4.0}, {2.5, 0.7}}) {
        const auto m = phi(fm, a, b), g = phi_gbm(-2, -1, a, b);
        expect_close(m, {g.phi11, g.phi12, g.phi21, g.phi22}, 1e-8);
    }
}

TEST(FundamentalMatrix, NumericalMatchesOdeintAcrossBreakpoints) {
    const auto p = validate(rough_spec());
    const FundamentalMatrix fm(p);
    ASSERT_EQ(fm.mode(), FundMode::Numerical);
    for (auto [a, b] : {std::pair{0.5, 4.0}, {3.0, 1.2}, {1.5, 2.5}}) {
        expect_close(phi(fm, a, b), oracle::phi_odeint(p, a, b), 1e-8);
    }
}

TEST(FundamentalMatrix, CocycleAndLiouville) {
    for (const auto& spec : {fixture::ex1(), fixture::numerical(fixture::ex1()), rough_spec()}) {
        const auto p = validate(spec);
        const FundamentalMatrix fm(p);
        const std::vector<double> xs{0.4, 1.0, 1.7, 2.5, 3.3, 6.0};
        for (double x : xs)
            for (double y : xs)
                for (double z : xs) {
                    const Mat2 lhs = phi(fm, y, z) * phi(fm, x, y);
                    const Mat2 rhs = phi(fm, x, z);
                    EXPECT_LE((lhs - rhs).max_abs(), 1e-7 * std::max(1.0, rhs.max_abs()));
                }
        for (double x : xs)
            for (double y : xs) {
                const double det = phi(fm, x, y).det();
                const double ref = x < y ? std::exp(log_det_integral(p, x, y)) : std::exp(-log_det_integral(p, y, x));
                EXPECT_NEAR(det / ref, 1.0, 1e-8);
            }
    }
}

TEST(FundamentalMatrix, Phi12PositiveForWellPosedProblems) {
    for (const auto& spec : {fixture::ex1(), fixture::ex2(3.5, 4.5), fixture::numerical(fixture::ex2(2.5, 3.5)), rough_spec()}) {
        const FundamentalMatrix fm(validate(spec));
        for (double a = 0.05; a < 20; a *= 1.7)
            for (double b = a * 1.01; b < 40; b *= 1.9) EXPECT_GT(phi(fm, a, b).phi12, 0.0) << a << " " << b;
    }
}

TEST(FundamentalMatrix, ConcurrentCallersAgree) {
    const FundamentalMatrix fm(validate(rough_spec()));
    const Mat2 ref = FundamentalMatrix(validate(rough_spec()))(0.7, 5.0);
    std::vector<std::jthread> pool;
    std::atomic<int> bad{0};
    for (int t = 0; t < 8; ++t)
        pool.emplace_back([&] {
            for (int k = 0; k < 20; ++k)
                if ((fm(0.7, 5.0) - ref).max_abs() != 0.0) ++bad;
        });
    pool.clear();
    EXPECT_EQ(bad.load(), 0);
}
