#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <vector>

#include "stopflow/error.hpp"
#include "stopflow/piecewise.hpp"
#include "stopflow/problem.hpp"

using namespace stopflow;

namespace {

double quad(auto f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

PiecewiseExpr ex1_pi() {
    const std::vector<double> knots{1.0, 2.0};
    const std::vector<double> values{-1.0, 1.0, -1.0};
    return piecewise_constant(knots, values);
}

}  // namespace

TEST(Piecewise, Ex1PayoffValues) {
    const auto pi = ex1_pi();
    EXPECT_EQ(eval_coeff(pi, 1.5), 1.0);
    EXPECT_EQ(eval_coeff(pi, 0.5), -1.0);
    EXPECT_EQ(eval_coeff(pi, 7.0), -1.0);
}

TEST(Piecewise, HalfOpenLookup) {
    const auto pi = ex1_pi();
    EXPECT_EQ(pi.segment_index(1.0), 1u);
    EXPECT_EQ(pi.segment_index(2.0), 2u);
    EXPECT_EQ(pi(1.0), 1.0);
    EXPECT_EQ(pi(2.0), -1.0);
}

TEST(Piecewise, LastSegmentClosed) {
    const auto f = PiecewiseExpr::constant(3.0, 0.0, 1.0);
    EXPECT_EQ(f(1.0), 3.0);
    EXPECT_THROW(f(1.5), Error);
}

TEST(Piecewise, MonomialSigma) {
    const auto s = PiecewiseExpr::monomial(1.0, 1.0, 0.0, kInf);
    EXPECT_EQ(eval_coeff(s, 2.0), 2.0);
}

TEST(Piecewise, Breakpoints) {
    const auto bps = ex1_pi().breakpoints();
    ASSERT_EQ(bps.size(), 2u);
    EXPECT_EQ(bps[0], 1.0);
    EXPECT_EQ(bps[1], 2.0);
}

TEST(Piecewise, RejectsGapsAndBadBounds) {
    try {
        PiecewiseExpr({Segment{0, 1, {{1, 0}}}, Segment{1.5, 2, {{1, 0}}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MalformedSegments);
    }
    EXPECT_THROW(PiecewiseExpr({Segment{1, 1, {{1, 0}}}}), Error);
    EXPECT_THROW(PiecewiseExpr(std::vector<Segment>{}), Error);
    EXPECT_THROW(PiecewiseExpr({Segment{-1, 1, {{1, 0.5}}}}), Error);
}

TEST(Piecewise, PiecewiseConstantNeedsMatchingValues) {
    const std::vector<double> knots{1.0};
    const std::vector<double> values{1.0};
    EXPECT_THROW(piecewise_constant(knots, values), Error);
}

TEST(Piecewise, PowerIntegralMatchesQuadrature) {
    for (double q : {-2.5, -1.0, -1e-9, 0.0, 1e-9, 0.5, 3.0}) {
        const double ref = quad([q](double z) { return std::pow(z, q - 1.0); }, 0.7, 3.1);
        EXPECT_NEAR(power_integral(q, 0.7, 3.1), ref, 1e-11 * std::max(1.0, std::abs(ref))) << q;
    }
}

TEST(Piecewise, PowerIntegralLogLimit) {
    EXPECT_NEAR(power_integral(0.0, 1.0, std::exp(2.0)), 2.0, 1e-14);
    EXPECT_NEAR(power_integral(1e-12, 1.0, std::exp(2.0)), 2.0, 1e-10);
}

TEST(Piecewise, IntegrateAcrossSegmentsWithShift) {
    PiecewiseExpr f({Segment{0, 1, {{2, 1}}}, Segment{1, 3, {{1, 0}, {-1, 0.5}}}, Segment{3, kInf, {{4, -2}}}});
    auto g = [&](double z) { return f(z) * std::pow(z, -1.5); };
    const double ref = quad(g, 0.5, 1.0) + quad(g, 1.0, 3.0) + quad(g, 3.0, 9.0);
    EXPECT_NEAR(f.integrate(0.5, 9.0, -1.5), ref, 1e-11);
}

TEST(Piecewise, IntegrateOverNegativeIntegerPowers) {
    PiecewiseExpr f({Segment{-2, 2, {{1, 0}, {3, 2}}}});
    EXPECT_NEAR(f.integrate(-1.0, 2.0), 3.0 + 9.0, 1e-13);
}

TEST(Piecewise, ScaledAndDerivative) {
    PiecewiseExpr f({Segment{0, kInf, {{2, 3}, {-1, 0.5}}}});
    EXPECT_NEAR(f.scaled(-2.0)(4.0), -2.0 * (128.0 - 2.0), 1e-12);
    const auto& t = f.segment(0).terms;
    EXPECT_NEAR(eval_terms_derivative(t, 4.0), 6.0 * 16.0 - 0.25, 1e-12);
}
