#pragma once

#include <complex>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stopflow/piecewise.hpp"

namespace stopflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Tolerances {
    double ode_rtol = 1e-10;
    double ode_atol = 1e-12;
    double root_tol = 1e-9;
    double nonneg_tol = 1e-9;
    double hjb_tol = 1e-6;
};

/// Which representation backs the fundamental matrix and solution curves.
/// Auto picks the closed form whenever the coefficients are recognised as a
/// geometric Brownian motion with distinct real characteristic roots.
enum class Backend { Auto, Numerical, ClosedForm };

struct SearchOptions {
    int anchor_grid = 512;     // geometric anchor grid for the two-sided scan
    int anchor_levels = 8;     // truncation level whose window the anchor grid spans
    int onesided_grid = 128;   // anchor grid for the one-sided (infimum/supremum) search
    int scan_points = 2048;    // closed-form curve sampling for minimum / zero scans
    int truncation_start = 4;
    int truncation_max = 40;
    std::optional<double> x_ref;
};

struct ProblemSpec {
    double m = 0.0;
    double M = kInf;
    PiecewiseExpr alpha;
    PiecewiseExpr sigma;
    PiecewiseExpr r;
    PiecewiseExpr pi;
    Tolerances tol;
    SearchOptions search;
    Backend backend = Backend::Auto;
};

enum class GbmTag { ComplexRoots, RepeatedRoot, DistinctReal };

std::string to_string(GbmTag tag);

/// Roots of P(d) = -(s^2/2) d^2 - (a - s^2/2) d + r. For DistinctReal the
/// roots are real with d1 < d2; for ComplexRoots d2 = conj(d1).
struct GbmCase {
    GbmTag tag = GbmTag::DistinctReal;
    std::complex<double> d1;
    std::complex<double> d2;
};

GbmCase classify_gbm(double alpha, double sigma, double r);

/// Constant GBM parameters recognised in a problem (alpha x, sigma x, r).
struct GbmParams {
    double alpha = 0.0;
    double sigma = 0.0;
    double r = 0.0;
    GbmCase roots;

    double d1() const { return roots.d1.real(); }
    double d2() const { return roots.d2.real(); }
};

/// alpha = (s^2/2)(1 - d1 - d2), r = -(s^2/2) d1 d2.
GbmParams gbm_from_roots(double d1, double d2, double sigma);

/// A (0, inf) problem with alpha(x) = alpha x, sigma(x) = sigma x, constant r.
ProblemSpec make_gbm_spec(double alpha, double sigma, double r, PiecewiseExpr pi);

/// Step function on [lo, hi]: values[k] between consecutive entries of
/// {lo, knots..., hi}. Requires values.size() == knots.size() + 1.
PiecewiseExpr piecewise_constant(std::span<const double> knots, std::span<const double> values,
                                 double lo = 0.0, double hi = kInf);

struct Truncation {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Coefficients of w' = A(x) w + b(x) at a point:
///   A = [[0, 1], [a21, a22]],  b = (0, b2).
struct OdeCoeffs {
    double a21 = 0.0;
    double a22 = 0.0;
    double b2 = 0.0;
};

/// Term lists active on a smooth piece of the domain.
struct LocalCoeffs {
    std::span<const PowerTerm> alpha;
    std::span<const PowerTerm> sigma;
    std::span<const PowerTerm> r;
    std::span<const PowerTerm> pi;

    OdeCoeffs at(double x) const {
        const double s = eval_terms(sigma, x);
        const double inv = 2.0 / (s * s);
        return {eval_terms(r, x) * inv, -eval_terms(alpha, x) * inv, -eval_terms(pi, x) * inv};
    }
};

/// A validated problem: immutable, cheap to copy, safe to share across threads.
class Problem {
public:
    const ProblemSpec& spec() const { return data_->spec; }
    const Tolerances& tol() const { return data_->spec.tol; }
    double m() const { return data_->spec.m; }
    double M() const { return data_->spec.M; }

    /// Breakpoints of all four coefficients strictly inside (m, M), sorted.
    std::span<const double> breakpoints() const { return data_->breakpoints; }
    std::span<const double> pi_breakpoints() const { return data_->pi_breakpoints; }

    const std::optional<GbmParams>& gbm() const { return data_->gbm; }
    bool closed_form() const { return data_->closed_form; }
    double x_ref() const { return data_->x_ref; }

    /// n-th compact truncation [m_n, M_n] of (m, M); expands with n.
    Truncation truncation(int n) const;

    /// Coefficient terms on the smooth piece containing the open interval (u, w).
    LocalCoeffs local(double u, double w) const;

    double alpha(double x) const { return data_->spec.alpha(x); }
    double sigma(double x) const { return data_->spec.sigma(x); }
    double r(double x) const { return data_->spec.r(x); }
    double pi(double x) const { return data_->spec.pi(x); }

    bool in_domain(double x) const { return x > m() && x < M(); }

    /// Integral of Pi/sigma^2-weighted quantities is structurally finite on
    /// compacts; this records that fact for reporting.
    const std::vector<std::string>& notes() const { return data_->notes; }

private:
    struct Data {
        ProblemSpec spec;
        std::vector<double> breakpoints;
        std::vector<double> pi_breakpoints;
        std::optional<GbmParams> gbm;
        bool closed_form = false;
        double x_ref = 1.0;
        double spread = 1.0;
        std::vector<std::string> notes;
    };
    std::shared_ptr<const Data> data_;

    friend Problem validate(const ProblemSpec& spec);
};

/// Checks the standing assumptions mechanically and returns an immutable handle.
/// Throws Error with SigmaNonPositive, DegenerateSign, MalformedSegments or
/// IllPosedGbm (GBM coefficients with complex or repeated roots).
Problem validate(const ProblemSpec& spec);

/// Structural GBM recognition: (0, inf), alpha = a x, sigma = s x, r constant.
std::optional<GbmParams> detect_gbm(const ProblemSpec& spec);

}  // namespace stopflow
