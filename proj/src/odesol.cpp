#include "stopflow/odesol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stopflow/error.hpp"
#include "stopflow/fundmat.hpp"

namespace stopflow {

struct SolutionCurve::Impl {
    Problem problem;
    double a = 0.0;
    double d = 0.0;
    Provenance provenance = Provenance::FromInitial;
    std::optional<double> b_end;
    Truncation window;

    virtual ~Impl() = default;
    virtual CurvePoint eval(double x) const = 0;
    virtual std::vector<double> nodes(double lo, double hi) const = 0;
    virtual double tolerance_at(double x) const = 0;
    virtual double scale_at(double x) const = 0;
    virtual bool closed_form() const = 0;

    void check_window(double x) const {
        if (!(x >= window.lo && x <= window.hi)) {
            std::ostringstream os;
            os << "x=" << x << " outside curve window [" << window.lo << ", " << window.hi << "]";
            throw Error(Errc::OutOfWindow, os.str());
        }
    }
};

namespace {

using Traj = rk::Trajectory<2, AffineField>;

class NumericCurve final : public SolutionCurve::Impl {
public:
    explicit NumericCurve(Traj traj) : traj_(std::move(traj)) {
        auto running = [](std::span<const rk::Node<2>> ns) {
            std::vector<double> out;
            double m = 0.0;
            for (const auto& n : ns) {
                m = std::max(m, std::abs(n.y[0]));
                out.push_back(m);
            }
            return out;
        };
        fwd_max_ = running(traj_.forward());
        bwd_max_ = running(traj_.backward());
    }

    CurvePoint eval(double x) const override {
        check_window(x);
        const auto y = traj_(x);
        return {y[0], y[1]};
    }

    std::vector<double> nodes(double lo, double hi) const override {
        const auto base = traj_.nodes(lo, hi);
        std::vector<double> out;
        out.reserve(2 * base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (i > 0) out.push_back(0.5 * (base[i - 1] + base[i]));
            out.push_back(base[i]);
        }
        return out;
    }

    double tolerance_at(double x) const override {
        const auto& tol = problem.tol();
        // Global integration error grows with the step count, hence the rtol margin.
        return (tol.nonneg_tol + 100.0 * tol.ode_rtol) * scale_at(x) + 10.0 * tol.ode_atol;
    }

    double scale_at(double x) const override {
        double scale = 0.0;
        if (x >= a) {
            const auto fw = traj_.forward();
            auto it = std::lower_bound(fw.begin(), fw.end(), x,
                                       [](const rk::Node<2>& n, double v) { return n.x < v; });
            const std::size_t i = std::min<std::size_t>(it - fw.begin(), fw.size() - 1);
            scale = fwd_max_[i];
        } else {
            const auto bw = traj_.backward();
            auto it = std::lower_bound(bw.begin(), bw.end(), x,
                                       [](const rk::Node<2>& n, double v) { return n.x > v; });
            const std::size_t i = std::min<std::size_t>(it - bw.begin(), bw.size() - 1);
            scale = bwd_max_[i];
        }
        return scale;
    }

    bool closed_form() const override { return false; }

private:
    Traj traj_;
    std::vector<double> fwd_max_;
    std::vector<double> bwd_max_;
};

/// v_{a,d}(x) = d phi12(a,x) - K (x^d2 G2(x) - x^d1 G1(x)),
/// G_k(x) = int_a^x Pi(z) z^(-d_k - 1) dz, K = 2 / (sigma^2 (d2 - d1)).
class GbmCurve final : public SolutionCurve::Impl {
public:
    GbmCurve(double d1, double d2, double sigma) : d1_(d1), d2_(d2) {
        k_ = 2.0 / (sigma * sigma * (d2 - d1));
    }

    struct Moments {
        double g1 = 0.0, g2 = 0.0, abs1 = 0.0, abs2 = 0.0;
    };

    Moments moments(double x) const {
        Moments mo;
        if (x == a) return mo;
        const auto& pi = problem.spec().pi;
        const double lo = std::min(a, x), hi = std::max(a, x);
        for (std::size_t k = pi.segment_index(lo); k < pi.segments().size(); ++k) {
            const auto& s = pi.segment(k);
            const double z0 = std::max(lo, s.lo), z1 = std::min(hi, s.hi);
            if (z0 < z1) {
                for (const auto& t : s.terms) {
                    if (t.coeff == 0.0) continue;
                    const double p1 = t.coeff * power_integral(t.exponent - d1_, z0, z1);
                    const double p2 = t.coeff * power_integral(t.exponent - d2_, z0, z1);
                    mo.g1 += p1;
                    mo.g2 += p2;
                    mo.abs1 += std::abs(p1);
                    mo.abs2 += std::abs(p2);
                }
            }
            if (s.hi >= hi) break;
        }
        if (x < a) {
            mo.g1 = -mo.g1;
            mo.g2 = -mo.g2;
        }
        return mo;
    }

    CurvePoint eval(double x) const override {
        check_window(x);
        const Moments mo = moments(x);
        const double x1 = std::pow(x, d1_), x2 = std::pow(x, d2_);
        CurvePoint out;
        out.v = -k_ * (x2 * mo.g2 - x1 * mo.g1);
        out.dv = -k_ * (d2_ * x2 * mo.g2 - d1_ * x1 * mo.g1) / x;
        if (d != 0.0) {
            const Mat2 p = phi_gbm(d1_, d2_, a, x);
            out.v += d * p.phi12;
            out.dv += d * p.phi22;
        }
        return out;
    }

    std::vector<double> nodes(double lo, double hi) const override {
        std::vector<double> out;
        const int n = std::max(problem.spec().search.scan_points, 8);
        const double llo = std::log(lo), lhi = std::log(hi);
        for (int i = 0; i <= n; ++i) out.push_back(std::exp(llo + (lhi - llo) * i / n));
        out.front() = lo;
        out.back() = hi;
        for (double b : problem.pi_breakpoints())
            if (b > lo && b < hi) out.push_back(b);
        if (a > lo && a < hi) out.push_back(a);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    double tolerance_at(double x) const override { return problem.tol().nonneg_tol * scale_at(x); }

    /// Sum of the magnitudes of the terms that cancel in v(x).
    double scale_at(double x) const override {
        const Moments mo = moments(x);
        double scale = k_ * (std::pow(x, d2_) * mo.abs2 + std::pow(x, d1_) * mo.abs1);
        if (d != 0.0) scale += std::abs(d * phi_gbm(d1_, d2_, a, x).phi12);
        return scale;
    }

    bool closed_form() const override { return true; }

private:
    double d1_, d2_, k_ = 0.0;
};

SolutionCurve make_curve(const Problem& problem, double a, double d, Truncation window,
                         Provenance prov, std::optional<double> b_end) {
    if (!(window.lo <= a && a <= window.hi)) {
        throw Error(Errc::OutOfWindow, "curve anchor outside its window");
    }
    if (!(window.lo >= problem.m() && window.hi <= problem.M()) ||
        !std::isfinite(window.lo) || !std::isfinite(window.hi) ||
        (window.lo == problem.m() && !problem.in_domain(a))) {
        throw Error(Errc::OutOfRange, "curve window must be a finite subinterval of the state interval");
    }
    std::shared_ptr<SolutionCurve::Impl> impl;
    if (problem.closed_form()) {
        if (!(window.lo > 0.0)) throw Error(Errc::NonPositiveState, "GBM curve window must lie in (0, inf)");
        const auto& g = *problem.gbm();
        impl = std::make_shared<GbmCurve>(g.d1(), g.d2(), g.sigma);
    } else {
        const auto& tol = problem.tol();
        impl = std::make_shared<NumericCurve>(Traj(AffineField{problem}, a, rk::Vec<2>{0.0, d},
                                                   window.lo, window.hi, problem.breakpoints(),
                                                   rk::Options{tol.ode_rtol, tol.ode_atol}));
    }
    impl->problem = problem;
    impl->a = a;
    impl->d = d;
    impl->provenance = prov;
    impl->b_end = b_end;
    impl->window = window;
    return SolutionCurve(std::move(impl));
}

double bisect_tol(const Problem& p, double x) {
    return std::max(0.1 * p.tol().root_tol, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(x));
}

/// Shrinks [lo, hi] with pred(lo) == false, pred(hi) == true; returns hi.
template <class Pred>
double bisect(double lo, double hi, double tol, Pred pred) {
    for (int it = 0; it < 200 && std::abs(hi - lo) > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}

/// Local minimum of v inside [lo, hi] given v'(lo) < 0 <= v'(hi).
double refine_min(const SolutionCurve& c, double lo, double hi) {
    const double tol = bisect_tol(c.problem(), hi);
    return bisect(lo, hi, tol, [&](double x) { return c.eval(x).dv >= 0.0; });
}

}  // namespace

double SolutionCurve::anchor() const { return impl_->a; }
double SolutionCurve::slope() const { return impl_->d; }
Provenance SolutionCurve::provenance() const { return impl_->provenance; }
std::optional<double> SolutionCurve::boundary_end() const { return impl_->b_end; }
Truncation SolutionCurve::window() const { return impl_->window; }
bool SolutionCurve::closed_form() const { return impl_->closed_form(); }
const Problem& SolutionCurve::problem() const { return impl_->problem; }
CurvePoint SolutionCurve::eval(double x) const { return impl_->eval(x); }
double SolutionCurve::tolerance_at(double x) const { return impl_->tolerance_at(x); }
double SolutionCurve::scale_at(double x) const { return impl_->scale_at(x); }

std::vector<double> SolutionCurve::nodes(double lo, double hi) const {
    impl_->check_window(lo);
    impl_->check_window(hi);
    return impl_->nodes(lo, hi);
}

SolutionCurve v_curve(const Problem& problem, double a, double d, Truncation window) {
    return make_curve(problem, a, d, window, Provenance::FromInitial, std::nullopt);
}

SolutionCurve v_boundary(const Problem& problem, double a, double b, Truncation window) {
    if (!(a < b)) throw Error(Errc::DegenerateOrdering, "v_boundary requires a < b");
    if (!window.contains(a) || !window.contains(b)) {
        throw Error(Errc::OutOfWindow, "boundary points must lie in the curve window");
    }
    const FundamentalMatrix fm(problem);
    const double p12 = fm(a, b).phi12;
    if (!(p12 > 0.0)) {
        std::ostringstream os;
        os << "phi12(" << a << ", " << b << ") = " << p12;
        throw Error(Errc::NonPositivePhi12, os.str());
    }
    const double v0 = v_curve(problem, a, 0.0, Truncation{a, b}).eval(b).v;
    return make_curve(problem, a, -v0 / p12, window, Provenance::FromBoundary, b);
}

CurvePoint eval(const SolutionCurve& curve, double x) { return curve.eval(x); }

std::optional<double> first_zero_after(const SolutionCurve& curve, double a) {
    const Truncation w = curve.window();
    if (!(a >= w.lo && a < w.hi)) throw Error(Errc::OutOfWindow, "first_zero_after start outside window");

    // Sign of v just right of the anchor, from the initial data.
    if (a == curve.anchor()) {
        const double d = curve.slope();
        if (d < 0.0) return a;
        if (d == 0.0) {
            const auto& pi = curve.problem().spec().pi;
            const double p = eval_terms(pi.segment(pi.segment_index(a)).terms, a);
            if (p > 0.0) return a;
        }
    }

    const auto xs = curve.nodes(a, w.hi);
    const double skip = a + 1e-8 * std::max(1.0, std::abs(a));
    auto below_zero = [&](double z) { return curve.eval(z).v <= 0.0; };
    double prev = a;
    double prev_dv = curve.eval(a).dv;
    bool risen = false;  // v has cleared its tolerance since the anchor
    for (double x : xs) {
        if (x <= skip) continue;
        const CurvePoint cp = curve.eval(x);
        const double tol = bisect_tol(curve.problem(), x);
        if (cp.v <= 0.0) return bisect(prev, x, tol, below_zero);
        if (prev_dv < 0.0 && cp.dv >= 0.0) {
            // A dip between nodes: a touch within tolerance counts as a zero.
            const double xm = refine_min(curve, prev, x);
            const double vm = curve.eval(xm).v;
            if (std::abs(vm) <= curve.tolerance_at(xm)) return xm;
            if (vm < 0.0) return bisect(prev, xm, tol, below_zero);
        } else if (risen && cp.dv >= 0.0 && cp.v <= curve.tolerance_at(x)) {
            return x;
        }
        risen = risen || cp.v > curve.tolerance_at(x);
        prev = x;
        prev_dv = cp.dv;
    }
    return std::nullopt;
}

std::vector<MinResult> local_minima(const SolutionCurve& curve, double lo, double hi) {
    std::vector<MinResult> out;
    const auto xs = curve.nodes(lo, hi);
    double prev_x = xs.front();
    double prev_dv = curve.eval(prev_x).dv;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double x = xs[i];
        const double dv = curve.eval(x).dv;
        if (prev_dv < 0.0 && dv >= 0.0) {
            const double xm = refine_min(curve, prev_x, x);
            if (xm > lo && xm < hi) out.push_back({xm, curve.eval(xm).v});
        }
        prev_x = x;
        prev_dv = dv;
    }
    return out;
}

MinResult min_over(const SolutionCurve& curve, double lo, double hi) {
    MinResult best{lo, curve.eval(lo).v};
    auto consider = [&](double x, double v) {
        if (v < best.v) best = {x, v};
    };
    for (double x : curve.nodes(lo, hi)) consider(x, curve.eval(x).v);
    for (const auto& m : local_minima(curve, lo, hi)) consider(m.x, m.v);
    return best;
}

bool nonneg_on(const SolutionCurve& curve, double lo, double hi, MinResult* worst) {
    MinResult w{lo, std::numeric_limits<double>::infinity()};
    double worst_margin = std::numeric_limits<double>::infinity();
    auto consider = [&](double x, double v) {
        const double margin = v + curve.tolerance_at(x);
        if (margin < worst_margin) {
            worst_margin = margin;
            w = {x, v};
        }
    };
    for (double x : curve.nodes(lo, hi)) consider(x, curve.eval(x).v);
    for (const auto& m : local_minima(curve, lo, hi)) consider(m.x, m.v);
    if (worst) *worst = w;
    return worst_margin >= 0.0;
}

}  // namespace stopflow
