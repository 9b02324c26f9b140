#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "stopflow/problem.hpp"
#include "stopflow/rk.hpp"

namespace stopflow {

struct CurvePoint {
    double v = 0.0;
    double dv = 0.0;
};

enum class Provenance { FromInitial, FromBoundary };

/// Right-hand side of w' = A w + b with w = (v, v').
struct AffineField {
    Problem problem;
    auto local(double u, double w) const {
        const LocalCoeffs lc = problem.local(u, w);
        return [lc](double x, const rk::Vec<2>& y) {
            const OdeCoeffs c = lc.at(x);
            return rk::Vec<2>{y[1], c.a21 * y[0] + c.a22 * y[1] + c.b2};
        };
    }
};

/// A solution of r v - alpha v' - (sigma^2/2) v'' = Pi with v(anchor) = 0 and
/// v'(anchor) = slope, available on a closed window. Immutable; copies share
/// the underlying representation.
class SolutionCurve {
public:
    struct Impl;

    SolutionCurve() = default;
    explicit SolutionCurve(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

    double anchor() const;
    double slope() const;
    Provenance provenance() const;
    /// Right boundary point for FromBoundary curves.
    std::optional<double> boundary_end() const;
    Truncation window() const;
    bool closed_form() const;
    const Problem& problem() const;

    CurvePoint eval(double x) const;
    CurvePoint operator()(double x) const { return eval(x); }

    /// Natural sampling nodes on [lo, hi], increasing, endpoints included.
    std::vector<double> nodes(double lo, double hi) const;

    /// Magnitude against which "v <= 0" and "v >= 0" are decided at x.
    double tolerance_at(double x) const;

    /// Magnitude of the quantities whose cancellation produces v(x): the
    /// running max |v| for integrated curves, the sum of absolute terms of the
    /// closed form otherwise.
    double scale_at(double x) const;

    bool valid() const { return impl_ != nullptr; }

private:
    std::shared_ptr<const Impl> impl_;
};

/// v_{a,d}: v(a) = 0, v'(a) = d, on `window`. Uses the closed form for GBM
/// problems when the problem's backend allows it, else integrates both ways.
SolutionCurve v_curve(const Problem& problem, double a, double d, Truncation window);

/// v^{[a,b]}: the solution with v(a) = v(b) = 0. Throws NonPositivePhi12 if
/// phi12(a, b) <= 0.
SolutionCurve v_boundary(const Problem& problem, double a, double b, Truncation window);

CurvePoint eval(const SolutionCurve& curve, double x);

/// Smallest x > a with v(x) <= 0. A local minimum within tolerance_at of
/// zero counts as a touch and returns the minimiser. Returns `a` itself when
/// the curve is non-positive immediately to the right of the anchor, and
/// nullopt when it stays positive across the window.
std::optional<double> first_zero_after(const SolutionCurve& curve, double a);

struct MinResult {
    double x = 0.0;
    double v = 0.0;
};

/// Minimum of v over [lo, hi]: node scan refined by bisection on v' at every
/// descending-to-ascending change.
MinResult min_over(const SolutionCurve& curve, double lo, double hi);

/// Interior local minima of v on (lo, hi), in increasing x.
std::vector<MinResult> local_minima(const SolutionCurve& curve, double lo, double hi);

/// True when v >= -tolerance_at(x) on [lo, hi]; `worst` receives the most
/// violating point (smallest v + tolerance).
bool nonneg_on(const SolutionCurve& curve, double lo, double hi, MinResult* worst = nullptr);

}  // namespace stopflow
