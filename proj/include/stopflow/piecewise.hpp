#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stopflow {

/// c * x^p
struct PowerTerm {
    double coeff = 0.0;
    double exponent = 0.0;
};

/// One piece of a piecewise power sum, active on [lo, hi).
struct Segment {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<PowerTerm> terms;
};

double eval_terms(std::span<const PowerTerm> terms, double x);
double eval_terms_derivative(std::span<const PowerTerm> terms, double x);

/// Exact value of the integral of z^(q-1) over [z0, z1], for z0, z1 > 0.
/// Stable for q near zero (reduces to log(z1/z0)).
double power_integral(double q, double z0, double z1);

/// Integral of sum_k c_k z^(p_k + shift) over [z0, z1]. Requires z0, z1 > 0
/// unless every shifted exponent is a non-negative integer.
double integrate_terms(std::span<const PowerTerm> terms, double shift, double z0, double z1);

/// Piecewise power sum. Segments tile [lo, hi] without gaps; lookups use
/// the half-open convention [lo_k, hi_k) with the last segment closed.
/// Bounds may be +-infinity.
class PiecewiseExpr {
public:
    PiecewiseExpr() = default;
    explicit PiecewiseExpr(std::vector<Segment> segments);

    static PiecewiseExpr constant(double value, double lo, double hi);
    static PiecewiseExpr monomial(double coeff, double exponent, double lo, double hi);

    double operator()(double x) const;
    std::size_t segment_index(double x) const;
    const Segment& segment(std::size_t i) const { return segments_[i]; }
    std::span<const Segment> segments() const { return segments_; }
    bool empty() const { return segments_.empty(); }

    double lo() const { return segments_.front().lo; }
    double hi() const { return segments_.back().hi; }

    /// Segment boundaries strictly inside (lo, hi).
    std::vector<double> breakpoints() const;

    /// Integral over [z0, z1] of f(z) * z^shift, accumulated segment by segment.
    double integrate(double z0, double z1, double shift = 0.0) const;

    PiecewiseExpr scaled(double factor) const;

private:
    std::vector<Segment> segments_;
};

double eval_coeff(const PiecewiseExpr& f, double x);

}  // namespace stopflow
