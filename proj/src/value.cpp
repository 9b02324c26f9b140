#include "stopflow/value.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stopflow/error.hpp"

namespace stopflow {

ValueFunction::ValueFunction(Problem problem, std::vector<MaximalInterval> intervals, Truncation window)
    : problem_(std::move(problem)), intervals_(std::move(intervals)), window_(window) {}

std::optional<std::size_t> ValueFunction::owner(double x) const {
    auto it = std::upper_bound(intervals_.begin(), intervals_.end(), x,
                               [](double v, const MaximalInterval& iv) { return v < iv.b; });
    // it is the first interval with b > x.
    if (it != intervals_.end() && it->contains(x)) return static_cast<std::size_t>(it - intervals_.begin());
    return std::nullopt;
}

CurvePoint ValueFunction::operator()(double x) const {
    if (!window_.contains(x)) {
        std::ostringstream os;
        os << "x=" << x << " outside value-function window [" << window_.lo << ", " << window_.hi << "]";
        throw Error(Errc::OutOfRange, os.str());
    }
    if (const auto k = owner(x)) return intervals_[*k].curve.eval(x);
    return {};
}

ValueFunction assemble(const Problem& problem, std::vector<MaximalInterval> intervals, Truncation window) {
    const double slack = 10.0 * problem.tol().root_tol;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        if (!(iv.a < iv.b)) throw Error(Errc::DegenerateOrdering, "maximal interval with a >= b");
        if (i > 0 && iv.a < intervals[i - 1].b - slack) {
            std::ostringstream os;
            os << "interval " << i << " starts at " << iv.a << " before previous end " << intervals[i - 1].b;
            throw Error(Errc::OverlappingIntervals, os.str());
        }
    }
    return ValueFunction(problem, std::move(intervals), window);
}

ValueFunction assemble(const Problem& problem, const IntervalSet& set) {
    return assemble(problem, set.intervals, set.window);
}

CurvePoint evaluate(const ValueFunction& v, double x) { return v(x); }

bool HjbReport::passed(const Tolerances& t) const {
    return max_violation_continue <= tol && max_violation_stop <= tol && min_V >= -nonneg_threshold &&
           max_boundary_jump <= std::max(t.ode_atol, t.root_tol) * 1e3 && max_fd_mismatch <= 1e-3;
}

namespace {

bool near_any(double x, std::span<const double> pts, double eps) {
    for (double p : pts)
        if (std::abs(x - p) <= eps) return true;
    return false;
}

}  // namespace

HjbReport hjb_residual(const ValueFunction& v, int n_grid) {
    const Problem& p = v.problem();
    const Truncation w = v.window();
    HjbReport rep;
    n_grid = std::max(n_grid, 3);

    double pi_max = 0.0;
    std::vector<double> xs;
    const bool geometric = w.lo > 0.0;
    for (int i = 0; i < n_grid; ++i) {
        const double t = (i + 0.5) / n_grid;
        xs.push_back(geometric ? w.lo * std::pow(w.hi / w.lo, t) : w.lo + t * (w.hi - w.lo));
    }
    for (double x : xs) pi_max = std::max(pi_max, std::abs(p.pi(x)));
    rep.tol = p.tol().hjb_tol * std::max(1.0, pi_max);

    std::vector<double> avoid(p.breakpoints().begin(), p.breakpoints().end());
    for (const auto& iv : v.intervals()) {
        avoid.push_back(iv.a);
        avoid.push_back(iv.b);
    }

    rep.min_V = 0.0;
    rep.nonneg_threshold = p.tol().nonneg_tol;
    for (const auto& iv : v.intervals())
        if (!iv.curve.closed_form()) rep.nonneg_threshold = p.tol().nonneg_tol + 100.0 * p.tol().ode_rtol;
    for (double x : xs) {
        const double h = 1e-4 * std::max(std::abs(x), 1e-6);
        if (near_any(x, avoid, 2.0 * h)) continue;
        const CurvePoint c = v(x);
        const double s = p.sigma(x), al = p.alpha(x), r = p.r(x), pi = p.pi(x);
        const auto own = v.owner(x);
        const bool cont = own.has_value();
        double res;
        if (cont) {
            const double d2 = 2.0 * (r * c.v - al * c.dv - pi) / (s * s);
            res = r * c.v - al * c.dv - 0.5 * s * s * d2 - pi;
            rep.max_violation_continue = std::max(rep.max_violation_continue, std::abs(res));
            if (x - h > w.lo && x + h < w.hi) {
                const double fd = (v(x + h).dv - v(x - h).dv) / (2.0 * h);
                // Second differences of the representation carry roundoff ~ eps * scale / h^2.
                const double noise = 1e-16 * v.intervals()[*own].curve.scale_at(x) / (h * h);
                const double scale = std::max({1.0, std::abs(d2), noise});
                rep.max_fd_mismatch = std::max(rep.max_fd_mismatch, std::abs(fd - d2) / scale);
            }
        } else {
            res = -pi;
            rep.max_violation_stop = std::max(rep.max_violation_stop, std::max(0.0, pi));
        }
        const double s_at = cont ? std::max(1.0, v.intervals()[*own].curve.scale_at(x)) : 1.0;
        rep.min_V = std::min(rep.min_V, c.v / s_at);
        rep.max_V = std::max(rep.max_V, c.v);
        rep.grid.push_back(x);
        rep.residual.push_back(res);
        rep.continuation.push_back(cont);
    }

    // Value matching and smooth fit at interior ends, seen from inside.
    for (const auto& iv : v.intervals()) {
        if (iv.a_kind == BoundaryKind::Interior) {
            const CurvePoint c = iv.curve.eval(iv.a);
            rep.max_boundary_jump = std::max({rep.max_boundary_jump, std::abs(c.v), std::abs(c.dv)});
        }
        if (iv.b_kind == BoundaryKind::Interior) {
            const CurvePoint c = iv.curve.eval(iv.b);
            rep.max_boundary_jump = std::max({rep.max_boundary_jump, std::abs(c.v), std::abs(c.dv)});
        }
        // Positivity inside: the curve's own minimum over the open interval.
        const double lo = std::max(iv.a, w.lo), hi = std::min(iv.b, w.hi);
        const MinResult mn = min_over(iv.curve, lo, hi);
        rep.min_V = std::min(rep.min_V, mn.v / std::max(1.0, iv.curve.scale_at(mn.x)));
    }
    return rep;
}

std::vector<Truncation> stopping_region(const ValueFunction& v) {
    std::vector<Truncation> out;
    const Truncation w = v.window();
    double start = w.lo;
    for (const auto& iv : v.intervals()) {
        if (iv.a > start || (iv.a == start && iv.a_kind == BoundaryKind::Interior)) {
            out.push_back({start, std::min(iv.a, w.hi)});
        }
        start = std::max(start, iv.b);
        if (start >= w.hi) break;
    }
    if (start < w.hi) out.push_back({start, w.hi});
    return out;
}

}  // namespace stopflow
