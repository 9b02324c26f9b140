#include "stopflow/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stopflow/error.hpp"

namespace stopflow {

std::string to_string(GbmTag tag) {
    switch (tag) {
        case GbmTag::ComplexRoots: return "ComplexRoots";
        case GbmTag::RepeatedRoot: return "RepeatedRoot";
        case GbmTag::DistinctReal: return "DistinctReal";
    }
    return "Unknown";
}

GbmCase classify_gbm(double alpha, double sigma, double r) {
    if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "classify_gbm requires sigma > 0");
    // (s^2/2) d^2 + (a - s^2/2) d - r = 0
    const double qa = 0.5 * sigma * sigma;
    const double qb = alpha - qa;
    const double qc = -r;
    const double disc = qb * qb - 4.0 * qa * qc;
    const double scale = qb * qb + std::abs(4.0 * qa * qc);
    GbmCase out;
    if (std::abs(disc) <= 1e-14 * scale) {
        out.tag = GbmTag::RepeatedRoot;
        out.d1 = out.d2 = -qb / (2.0 * qa);
    } else if (disc < 0.0) {
        out.tag = GbmTag::ComplexRoots;
        const double re = -qb / (2.0 * qa);
        const double im = std::sqrt(-disc) / (2.0 * qa);
        out.d1 = {re, -im};
        out.d2 = {re, im};
    } else {
        out.tag = GbmTag::DistinctReal;
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (qb + std::copysign(sq, qb));
        double x1 = q / qa;
        double x2 = (q != 0.0) ? qc / q : -x1;
        if (x1 > x2) std::swap(x1, x2);
        out.d1 = x1;
        out.d2 = x2;
    }
    return out;
}

GbmParams gbm_from_roots(double d1, double d2, double sigma) {
    const double half = 0.5 * sigma * sigma;
    GbmParams p;
    p.sigma = sigma;
    p.alpha = half * (1.0 - d1 - d2);
    p.r = -half * d1 * d2;
    p.roots = classify_gbm(p.alpha, p.sigma, p.r);
    if (p.roots.tag == GbmTag::DistinctReal) {
        // Keep the caller's exact roots rather than the re-solved ones.
        p.roots.d1 = std::min(d1, d2);
        p.roots.d2 = std::max(d1, d2);
    }
    return p;
}

ProblemSpec make_gbm_spec(double alpha, double sigma, double r, PiecewiseExpr pi) {
    ProblemSpec spec;
    spec.m = 0.0;
    spec.M = kInf;
    spec.alpha = PiecewiseExpr::monomial(alpha, 1.0, 0.0, kInf);
    spec.sigma = PiecewiseExpr::monomial(sigma, 1.0, 0.0, kInf);
    spec.r = PiecewiseExpr::constant(r, 0.0, kInf);
    spec.pi = std::move(pi);
    return spec;
}

PiecewiseExpr piecewise_constant(std::span<const double> knots, std::span<const double> values,
                                 double lo, double hi) {
    if (values.size() != knots.size() + 1) {
        throw Error(Errc::MalformedSegments, "piecewise_constant needs one more value than knots");
    }
    std::vector<Segment> segs;
    double left = lo;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double right = k < knots.size() ? knots[k] : hi;
        segs.push_back(Segment{left, right, {PowerTerm{values[k], 0.0}}});
        left = right;
    }
    return PiecewiseExpr(std::move(segs));
}

namespace {

/// Sample points of [lo, hi] (possibly unbounded), including finite endpoints.
std::vector<double> sample_range(double lo, double hi, int n) {
    std::vector<double> xs;
    if (std::isfinite(lo) && std::isfinite(hi)) {
        for (int k = 0; k <= n; ++k) xs.push_back(lo + (hi - lo) * k / n);
    } else if (std::isfinite(lo)) {
        const double base = std::max(1.0, std::abs(lo));
        xs.push_back(lo);
        for (int k = 0; k <= n; ++k) xs.push_back(lo + base * std::ldexp(1.0, k - n / 2));
    } else if (std::isfinite(hi)) {
        const double base = std::max(1.0, std::abs(hi));
        xs.push_back(hi);
        for (int k = 0; k <= n; ++k) xs.push_back(hi - base * std::ldexp(1.0, k - n / 2));
    } else {
        xs.push_back(0.0);
        for (int k = 0; k <= n; ++k) {
            xs.push_back(std::ldexp(1.0, k - n / 2));
            xs.push_back(-std::ldexp(1.0, k - n / 2));
        }
    }
    return xs;
}

void check_covers(const PiecewiseExpr& f, const char* name, double m, double M) {
    if (f.empty()) throw Error(Errc::MalformedSegments, std::string(name) + " has no segments");
    if (f.lo() > m || f.hi() < M) {
        std::ostringstream os;
        os << name << " tiles [" << f.lo() << ", " << f.hi() << "], which does not cover (" << m
           << ", " << M << ")";
        throw Error(Errc::MalformedSegments, os.str());
    }
}

bool single_power(const PiecewiseExpr& f, double exponent, double& coeff) {
    if (f.segments().size() != 1) return false;
    coeff = 0.0;
    for (const auto& t : f.segment(0).terms) {
        if (t.coeff == 0.0) continue;
        if (t.exponent != exponent) return false;
        coeff += t.coeff;
    }
    return true;
}

}  // namespace

std::optional<GbmParams> detect_gbm(const ProblemSpec& spec) {
    if (spec.m != 0.0 || spec.M != kInf) return std::nullopt;
    double a = 0.0, s = 0.0, r = 0.0;
    if (!single_power(spec.alpha, 1.0, a) || !single_power(spec.sigma, 1.0, s) ||
        !single_power(spec.r, 0.0, r) || !(s > 0.0)) {
        return std::nullopt;
    }
    GbmParams p;
    p.alpha = a;
    p.sigma = s;
    p.r = r;
    p.roots = classify_gbm(a, s, r);
    return p;
}

Problem validate(const ProblemSpec& spec) {
    if (!(spec.m < spec.M)) throw Error(Errc::MalformedSegments, "state interval requires m < M");
    check_covers(spec.alpha, "alpha", spec.m, spec.M);
    check_covers(spec.sigma, "sigma", spec.m, spec.M);
    check_covers(spec.r, "r", spec.m, spec.M);
    check_covers(spec.pi, "pi", spec.m, spec.M);

    const auto& t = spec.tol;
    for (double v : {t.ode_rtol, t.ode_atol, t.root_tol, t.nonneg_tol, t.hjb_tol}) {
        if (!(v > 0.0)) throw Error(Errc::InvalidArgument, "tolerances must be positive");
    }

    auto inside = [&](double x) { return x > spec.m && x < spec.M; };

    // sigma > 0 on a dense sample of every segment, endpoints included with
    // the segment's own terms so both one-sided limits are checked.
    for (const auto& seg : spec.sigma.segments()) {
        const double lo = std::max(seg.lo, spec.m);
        const double hi = std::min(seg.hi, spec.M);
        if (!(lo < hi)) continue;
        for (double x : sample_range(lo, hi, 64)) {
            if (!inside(x)) continue;
            const double s = eval_terms(seg.terms, x);
            if (!(s > 0.0)) {
                std::ostringstream os;
                os << "sigma(" << x << ") = " << s;
                throw Error(Errc::SigmaNonPositive, os.str());
            }
        }
    }

    bool has_pos = false, has_neg = false;
    for (const auto& seg : spec.pi.segments()) {
        const double lo = std::max(seg.lo, spec.m);
        const double hi = std::min(seg.hi, spec.M);
        if (!(lo < hi)) continue;
        for (double x : sample_range(lo, hi, 64)) {
            if (!inside(x)) continue;
            const double v = eval_terms(seg.terms, x);
            has_pos = has_pos || v > 0.0;
            has_neg = has_neg || v < 0.0;
        }
    }
    if (!has_pos || !has_neg) {
        throw Error(Errc::DegenerateSign, has_pos ? "payoff is non-negative almost everywhere"
                                                  : "payoff is non-positive almost everywhere");
    }

    auto data = std::make_shared<Problem::Data>();
    data->spec = spec;

    auto collect = [&](const PiecewiseExpr& f, std::vector<double>& out) {
        for (double b : f.breakpoints())
            if (inside(b)) out.push_back(b);
    };
    collect(spec.alpha, data->breakpoints);
    collect(spec.sigma, data->breakpoints);
    collect(spec.r, data->breakpoints);
    collect(spec.pi, data->breakpoints);
    collect(spec.pi, data->pi_breakpoints);
    for (auto* v : {&data->breakpoints, &data->pi_breakpoints}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }

    data->gbm = detect_gbm(spec);
    if (data->gbm && data->gbm->roots.tag != GbmTag::DistinctReal) {
        throw Error(Errc::IllPosedGbm, "GBM characteristic polynomial has " +
                                           to_string(data->gbm->roots.tag) +
                                           "; the problem is trivial or ill-posed");
    }
    if (spec.backend == Backend::ClosedForm && !data->gbm) {
        throw Error(Errc::InvalidArgument, "closed-form backend requested for non-GBM coefficients");
    }
    data->closed_form = data->gbm.has_value() && spec.backend != Backend::Numerical;

    const auto& bps = data->pi_breakpoints;
    if (spec.search.x_ref) {
        data->x_ref = *spec.search.x_ref;
    } else if (!bps.empty() && bps.front() > 0.0 && spec.m >= 0.0) {
        double log_sum = 0.0;
        for (double b : bps) log_sum += std::log(b);
        data->x_ref = std::exp(log_sum / static_cast<double>(bps.size()));
    } else if (!bps.empty()) {
        double sum = 0.0;
        for (double b : bps) sum += b;
        data->x_ref = sum / static_cast<double>(bps.size());
    } else if (std::isfinite(spec.m) && std::isfinite(spec.M)) {
        data->x_ref = 0.5 * (spec.m + spec.M);
    } else if (spec.m == 0.0) {
        data->x_ref = 1.0;
    } else if (std::isfinite(spec.m)) {
        data->x_ref = spec.m + 1.0;
    } else if (std::isfinite(spec.M)) {
        data->x_ref = spec.M - 1.0;
    } else {
        data->x_ref = 0.0;
    }
    if (!inside(data->x_ref)) throw Error(Errc::InvalidArgument, "x_ref outside the state interval");
    data->spread = bps.size() >= 2 ? std::max(1.0, bps.back() - bps.front()) : 1.0;

    data->notes.push_back(
        "1/sigma^2, alpha/sigma^2, r/sigma^2, pi/sigma^2 locally integrable: power sums with "
        "sigma > 0 are bounded on compact subintervals");

    Problem p;
    p.data_ = std::move(data);
    return p;
}

Truncation Problem::truncation(int n) const {
    const double m = this->m(), M = this->M(), x = data_->x_ref, w = data_->spread;
    Truncation t;
    if (std::isfinite(m)) {
        t.lo = m + (x - m) * std::ldexp(1.0, -n);
    } else {
        t.lo = x - w * std::ldexp(1.0, n);
    }
    if (std::isfinite(M)) {
        t.hi = M - (M - x) * std::ldexp(1.0, -n);
    } else if (std::isfinite(m)) {
        t.hi = m + (x - m) * std::ldexp(1.0, n);
    } else {
        t.hi = x + w * std::ldexp(1.0, n);
    }
    return t;
}

LocalCoeffs Problem::local(double u, double w) const {
    const auto& s = data_->spec;
    const double mid = (std::isfinite(u) && std::isfinite(w)) ? 0.5 * (u + w) : (std::isfinite(u) ? u : w);
    LocalCoeffs c;
    c.alpha = s.alpha.segment(s.alpha.segment_index(mid)).terms;
    c.sigma = s.sigma.segment(s.sigma.segment_index(mid)).terms;
    c.r = s.r.segment(s.r.segment_index(mid)).terms;
    c.pi = s.pi.segment(s.pi.segment_index(mid)).terms;
    return c;
}

}  // namespace stopflow
