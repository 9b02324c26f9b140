#include "stopflow/intervals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stopflow/error.hpp"
#include "stopflow/parallel.hpp"

namespace stopflow {

std::string to_string(BoundaryKind kind) {
    return kind == BoundaryKind::Interior ? "Interior" : "DomainEdge";
}

namespace {

constexpr double kNoDip = std::numeric_limits<double>::infinity();

/// Pi just right of x (segments are half-open).
double pi_right(const Problem& p, double x) {
    const auto& pi = p.spec().pi;
    return eval_terms(pi.segment(pi.segment_index(x)).terms, x);
}

/// Grid of n+1 points over [lo, hi], geometric when the window is positive,
/// merged with the Pi breakpoints inside it.
std::vector<double> anchor_grid(const Problem& p, Truncation w, int n) {
    std::vector<double> g;
    n = std::max(n, 2);
    const bool geometric = w.lo > 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        g.push_back(geometric ? std::exp(std::log(w.lo) + t * (std::log(w.hi) - std::log(w.lo)))
                              : w.lo + t * (w.hi - w.lo));
    }
    g.front() = w.lo;
    g.back() = w.hi;
    for (double b : p.pi_breakpoints())
        if (b > w.lo && b < w.hi) g.push_back(b);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

/// Deepest dip of v_{a,0} right of the anchor: smallest interior local
/// minimum, or the right end when the curve is still falling there.
/// kNoDip when the curve keeps rising.
struct Dip {
    double v = kNoDip;
    double x = 0.0;
};

Dip dip(const SolutionCurve& c, double a, double hi) {
    Dip d;
    for (const auto& m : local_minima(c, a, hi)) {
        if (m.v < d.v) d = {m.v, m.x};
    }
    const CurvePoint end = c.eval(hi);
    if (end.dv < 0.0 && end.v < d.v) d = {end.v, hi};
    return d;
}

Dip dip_at(const Problem& p, double a, double hi) {
    return dip(v_curve(p, a, 0.0, Truncation{a, hi}), a, hi);
}

double scale_on(const SolutionCurve& c, double lo, double hi) {
    double s = 0.0;
    for (double x : c.nodes(lo, hi)) s = std::max(s, std::abs(c.eval(x).v));
    return std::max(s, 1.0);
}

double settle_tol(const Problem& p, double x) {
    return std::max(p.tol().root_tol, 8.0 * std::numeric_limits<double>::epsilon() * std::abs(x));
}

template <class Pred>
double bisect_anchor(const Problem& p, double lo, double hi, Pred pred, double rel = 0.1) {
    // pred(lo) false, pred(hi) true.
    const double tol = rel * p.tol().root_tol;
    for (int it = 0; it < 200 && hi - lo > std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}

bool globally_nonneg(const Problem& p, double a, Truncation w) {
    return nonneg_on(v_curve(p, a, 0.0, w), w.lo, w.hi);
}

Certificate certify(const SolutionCurve& c, Truncation w) {
    MinResult worst;
    nonneg_on(c, w.lo, w.hi, &worst);
    Certificate cert;
    cert.global_min = worst.v;
    cert.global_min_at = worst.x;
    cert.margin = worst.v + c.tolerance_at(worst.x);
    return cert;
}

}  // namespace

std::optional<SmoothFit> smooth_fit_residual(const Problem& problem, double a, Truncation window) {
    if (!window.contains(a) || a >= window.hi) {
        throw Error(Errc::OutOfWindow, "smooth_fit_residual anchor outside truncation");
    }
    const SolutionCurve c = v_curve(problem, a, 0.0, Truncation{a, window.hi});
    const auto b = first_zero_after(c, a);
    if (!b || *b == a) return std::nullopt;
    return SmoothFit{*b, c.eval(*b).dv};
}

std::optional<SmoothFit> smooth_fit_residual(const Problem& problem, double a) {
    const auto& s = problem.spec().search;
    return smooth_fit_residual(problem, a, problem.truncation(std::max(s.truncation_start, s.anchor_levels)));
}

std::vector<TwoSidedRoot> two_sided_roots(const Problem& problem, Truncation window,
                                          std::vector<std::string>* warnings) {
    const auto& s = problem.spec().search;
    const auto& tol = problem.tol();
    Truncation span = problem.truncation(s.anchor_levels);
    span.lo = std::max(span.lo, window.lo);
    span.hi = std::min(span.hi, window.hi);

    // Anchors must be approachable from {Pi < 0}: keep grid points where Pi is
    // negative just to their right.
    const auto grid = anchor_grid(problem, span, s.anchor_grid);
    std::vector<char> usable(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        usable[i] = grid[i] < window.hi && problem.in_domain(grid[i]) && pi_right(problem, grid[i]) < 0.0;

    std::vector<Dip> dips(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        if (usable[i]) dips[i] = dip_at(problem, grid[i], window.hi);
    });

    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        if (usable[i] && usable[i + 1] && (dips[i].v > 0.0) != (dips[i + 1].v > 0.0)) cells.push_back(i);
    }
    for (std::size_t k = 1; k < cells.size(); ++k) {
        if (cells[k] == cells[k - 1] + 1 && warnings) {
            std::ostringstream os;
            os << "ScanTooCoarse: adjacent sign changes near a=" << grid[cells[k]];
            warnings->push_back(os.str());
        }
    }

    std::vector<std::optional<TwoSidedRoot>> found(cells.size());
    parallel_for(cells.size(), [&](std::size_t k) {
        const std::size_t i = cells[k];
        const bool target = dips[i + 1].v > 0.0;
        const double a = bisect_anchor(problem, grid[i], grid[i + 1],
                                       [&](double x) { return (dip_at(problem, x, window.hi).v > 0.0) == target; },
                                       1e-3);

        const SolutionCurve c = v_curve(problem, a, 0.0, window);
        const Dip d = dip(c, a, window.hi);
        if (!(d.v < kNoDip) || d.x >= window.hi) return;
        // A genuine tangency leaves a vanishing dip; a jump of the dip across
        // the bracket does not.
        if (std::abs(d.v) > 1e-6 * scale_on(c, a, d.x)) return;

        MinResult worst;
        if (!nonneg_on(c, window.lo, window.hi, &worst)) return;
        const CurvePoint at_b = c.eval(d.x);
        TwoSidedRoot root;
        root.a = a;
        root.b = d.x;
        root.residuals = {-0.5 * at_b.v, -0.5 * at_b.dv};
        root.global_min = worst.v;
        root.global_min_at = worst.x;
        found[k] = root;
    });

    std::vector<TwoSidedRoot> out;
    for (const auto& f : found) {
        if (!f) continue;
        if (!out.empty() && std::abs(f->a - out.back().a) < 10.0 * tol.root_tol) {
            if (warnings) {
                std::ostringstream os;
                os << "DegenerateRoot: merged anchors " << out.back().a << " and " << f->a;
                warnings->push_back(os.str());
            }
            continue;
        }
        out.push_back(*f);
    }
    return out;
}

std::vector<std::pair<double, double>> find_two_sided(const Problem& problem) {
    const auto& s = problem.spec().search;
    std::vector<std::pair<double, double>> out;
    for (const auto& r : two_sided_roots(problem, problem.truncation(std::max(s.truncation_max, s.anchor_levels))))
        out.emplace_back(r.a, r.b);
    return out;
}

namespace {

struct SideTrack {
    std::vector<double>& seq;
    std::vector<char> edge;

    void push(double x, bool at_edge) {
        seq.push_back(x);
        edge.push_back(at_edge);
    }
    bool settled(const Problem& p) const {
        const std::size_t n = seq.size();
        if (n < 2) return false;
        if (edge[n - 1] && edge[n - 2]) return true;
        if (edge[n - 1] || edge[n - 2]) return false;
        return std::abs(seq[n - 1] - seq[n - 2]) < settle_tol(p, seq[n - 1]);
    }
};

}  // namespace

OneSidedResult find_one_sided(const Problem& problem) {
    const auto& s = problem.spec().search;
    OneSidedResult res;
    SideTrack lower{res.lower_sequence, {}};
    SideTrack upper{res.upper_sequence, {}};
    int empty_levels = 0;

    for (int n = s.truncation_start; n <= s.truncation_max; ++n) {
        const Truncation w = problem.truncation(n);
        const auto grid = anchor_grid(problem, w, s.onesided_grid);
        auto ok = [&](double a) { return globally_nonneg(problem, a, w); };

        std::optional<std::size_t> first, last;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (ok(grid[i])) {
                first = i;
                break;
            }
        if (first) {
            for (std::size_t i = grid.size(); i-- > *first;)
                if (i == *first || ok(grid[i])) {
                    last = i;
                    break;
                }
        }

        res.level = n;
        res.window = w;
        res.any_nonneg_anchor = first.has_value();
        if (!first) {
            if (++empty_levels >= 2) return res;
            continue;
        }
        empty_levels = 0;

        const double a_hat = *first == 0 ? w.lo : bisect_anchor(problem, grid[*first - 1], grid[*first], ok);
        const bool top = *last + 1 == grid.size();
        const double b_hat = top ? w.hi
                                 : -bisect_anchor(problem, -grid[*last + 1], -grid[*last],
                                                  [&](double x) { return ok(-x); });
        lower.push(a_hat, *first == 0);
        upper.push(b_hat, top);
        if (lower.settled(problem) && upper.settled(problem)) break;
        if (n == s.truncation_max) {
            std::ostringstream os;
            os.precision(12);
            os << "one-sided limits did not settle by level " << n << "; last a_hat_n:";
            for (std::size_t k = res.lower_sequence.size() >= 3 ? res.lower_sequence.size() - 3 : 0;
                 k < res.lower_sequence.size(); ++k)
                os << ' ' << res.lower_sequence[k];
            os << "; last b_hat_n:";
            for (std::size_t k = res.upper_sequence.size() >= 3 ? res.upper_sequence.size() - 3 : 0;
                 k < res.upper_sequence.size(); ++k)
                os << ' ' << res.upper_sequence[k];
            throw Error(Errc::TruncationNotConverged, os.str());
        }
    }

    const Truncation w = res.window;
    if (!lower.edge.back()) {
        const double a_hat = res.lower_sequence.back();
        MaximalInterval iv;
        iv.a = problem.m();
        iv.b = a_hat;
        iv.a_kind = BoundaryKind::DomainEdge;
        iv.b_kind = BoundaryKind::Interior;
        iv.curve = v_curve(problem, a_hat, 0.0, w);
        iv.certificate = certify(iv.curve, w);
        res.lower = std::move(iv);
    }
    if (!upper.edge.back()) {
        const double b_hat = res.upper_sequence.back();
        MaximalInterval iv;
        iv.a = b_hat;
        iv.b = problem.M();
        iv.a_kind = BoundaryKind::Interior;
        iv.b_kind = BoundaryKind::DomainEdge;
        iv.curve = v_curve(problem, b_hat, 0.0, w);
        iv.certificate = certify(iv.curve, w);
        res.upper = std::move(iv);
    }
    return res;
}

IntervalSet maximal_intervals(const Problem& problem) {
    const auto& s = problem.spec().search;
    const auto& tol = problem.tol();
    IntervalSet out;

    OneSidedResult one = find_one_sided(problem);
    out.level = std::max(one.level, s.anchor_levels);
    out.window = problem.truncation(out.level);
    const Truncation w = out.window;

    std::vector<MaximalInterval> cand;
    for (const auto& r : two_sided_roots(problem, w, &out.warnings)) {
        MaximalInterval iv;
        iv.a = r.a;
        iv.b = r.b;
        iv.curve = v_boundary(problem, r.a, r.b, w);
        iv.certificate = certify(iv.curve, w);
        iv.certificate.residuals = r.residuals;
        cand.push_back(std::move(iv));
    }
    // One-sided curves are re-certified on the common window.
    for (auto* side : {&one.lower, &one.upper}) {
        if (!*side) continue;
        MaximalInterval iv = std::move(**side);
        const double anchor = iv.curve.anchor();
        iv.curve = v_curve(problem, anchor, 0.0, w);
        iv.certificate = certify(iv.curve, w);
        cand.push_back(std::move(iv));
    }

    if (cand.empty()) {
        if (one.any_nonneg_anchor) {
            out.warnings.push_back("no maximal interval found although nonnegative anchors exist");
            return out;
        }
        // Step (III): no anchor yields a globally nonnegative curve. The
        // curve pins both edges, so it is built on the widest truncation.
        out.level = std::max(out.level, s.truncation_max);
        out.window = problem.truncation(out.level);
        const Truncation w = out.window;
        MaximalInterval iv;
        iv.a = problem.m();
        iv.b = problem.M();
        iv.a_kind = iv.b_kind = BoundaryKind::DomainEdge;
        iv.curve = v_boundary(problem, w.lo, w.hi, w);
        iv.certificate = certify(iv.curve, w);
        out.intervals.push_back(std::move(iv));
        out.whole_domain = true;
        return out;
    }

    std::sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
    for (auto& iv : cand) {
        if (!out.intervals.empty()) {
            auto& prev = out.intervals.back();
            const double slack = 10.0 * tol.root_tol;
            if (iv.a < prev.b - slack) {
                const bool prev_covers = iv.b <= prev.b + slack;
                const bool iv_covers = iv.a <= prev.a + slack && iv.b >= prev.b - slack;
                if (!prev_covers && !iv_covers) {
                    std::ostringstream os;
                    os << "intervals (" << prev.a << ", " << prev.b << ") and (" << iv.a << ", " << iv.b
                       << ") overlap";
                    throw Error(Errc::OverlappingIntervals, os.str());
                }
                std::ostringstream os;
                os << "dropped nested interval ";
                if (prev_covers) {
                    os << '(' << iv.a << ", " << iv.b << ')';
                    out.warnings.push_back(os.str());
                    continue;
                }
                os << '(' << prev.a << ", " << prev.b << ')';
                out.warnings.push_back(os.str());
                prev = std::move(iv);
                continue;
            }
        }
        out.intervals.push_back(std::move(iv));
    }
    return out;
}

}  // namespace stopflow
