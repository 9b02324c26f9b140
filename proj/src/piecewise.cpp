#include "stopflow/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stopflow/error.hpp"

namespace stopflow {

namespace {

bool is_integer(double p) { return std::isfinite(p) && p == std::floor(p); }

double term_value(const PowerTerm& t, double x) {
    if (t.exponent == 0.0) return t.coeff;
    if (t.exponent == 1.0) return t.coeff * x;
    return t.coeff * std::pow(x, t.exponent);
}

}  // namespace

double eval_terms(std::span<const PowerTerm> terms, double x) {
    double sum = 0.0;
    for (const auto& t : terms) sum += term_value(t, x);
    return sum;
}

double eval_terms_derivative(std::span<const PowerTerm> terms, double x) {
    double sum = 0.0;
    for (const auto& t : terms) {
        if (t.exponent == 0.0) continue;
        sum += t.coeff * t.exponent * std::pow(x, t.exponent - 1.0);
    }
    return sum;
}

double power_integral(double q, double z0, double z1) {
    const double log_ratio = std::log(z1 / z0);
    if (q == 0.0) return log_ratio;
    return std::pow(z0, q) * std::expm1(q * log_ratio) / q;
}

double integrate_terms(std::span<const PowerTerm> terms, double shift, double z0, double z1) {
    double sum = 0.0;
    for (const auto& t : terms) {
        if (t.coeff == 0.0) continue;
        const double e = t.exponent + shift;
        if (z0 > 0.0 && z1 > 0.0) {
            sum += t.coeff * power_integral(e + 1.0, z0, z1);
        } else if (e == -1.0) {
            if (z0 * z1 <= 0.0) {
                throw Error(Errc::OutOfRange, "integral of 1/z across the origin");
            }
            sum += t.coeff * std::log(z1 / z0);
        } else if (is_integer(e) && e > -1.0) {
            sum += t.coeff * (std::pow(z1, e + 1.0) - std::pow(z0, e + 1.0)) / (e + 1.0);
        } else {
            throw Error(Errc::OutOfRange, "power term not integrable on a non-positive range");
        }
    }
    return sum;
}

PiecewiseExpr::PiecewiseExpr(std::vector<Segment> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw Error(Errc::MalformedSegments, "no segments");
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const auto& s = segments_[k];
        if (std::isnan(s.lo) || std::isnan(s.hi) || !(s.lo < s.hi)) {
            std::ostringstream os;
            os << "segment " << k << " has non-increasing bounds [" << s.lo << ", " << s.hi << ")";
            throw Error(Errc::MalformedSegments, os.str());
        }
        if (k > 0 && segments_[k - 1].hi != s.lo) {
            std::ostringstream os;
            os << "segments " << k - 1 << " and " << k << " do not tile (" << segments_[k - 1].hi
               << " != " << s.lo << ")";
            throw Error(Errc::MalformedSegments, os.str());
        }
        for (const auto& t : s.terms) {
            if (!std::isfinite(t.coeff) || !std::isfinite(t.exponent)) {
                throw Error(Errc::MalformedSegments, "non-finite term in segment " + std::to_string(k));
            }
            if (!is_integer(t.exponent) && s.lo < 0.0) {
                throw Error(Errc::MalformedSegments,
                            "non-integer exponent on a segment reaching x<0 (segment " +
                                std::to_string(k) + ")");
            }
        }
    }
}

PiecewiseExpr PiecewiseExpr::constant(double value, double lo, double hi) {
    return PiecewiseExpr({Segment{lo, hi, {PowerTerm{value, 0.0}}}});
}

PiecewiseExpr PiecewiseExpr::monomial(double coeff, double exponent, double lo, double hi) {
    return PiecewiseExpr({Segment{lo, hi, {PowerTerm{coeff, exponent}}}});
}

std::size_t PiecewiseExpr::segment_index(double x) const {
    if (segments_.empty() || std::isnan(x) || x < lo() || x > hi()) {
        std::ostringstream os;
        os << "x=" << x << " outside tiled range";
        if (!segments_.empty()) os << " [" << lo() << ", " << hi() << "]";
        throw Error(Errc::OutOfRange, os.str());
    }
    auto it = std::upper_bound(segments_.begin(), segments_.end(), x,
                               [](double v, const Segment& s) { return v < s.hi; });
    if (it == segments_.end()) return segments_.size() - 1;
    return static_cast<std::size_t>(it - segments_.begin());
}

double PiecewiseExpr::operator()(double x) const {
    return eval_terms(segments_[segment_index(x)].terms, x);
}

std::vector<double> PiecewiseExpr::breakpoints() const {
    std::vector<double> out;
    for (std::size_t k = 1; k < segments_.size(); ++k) out.push_back(segments_[k].lo);
    return out;
}

double PiecewiseExpr::integrate(double z0, double z1, double shift) const {
    if (z0 == z1) return 0.0;
    if (z1 < z0) return -integrate(z1, z0, shift);
    double sum = 0.0;
    for (std::size_t k = segment_index(z0); k < segments_.size(); ++k) {
        const auto& s = segments_[k];
        const double lo = std::max(z0, s.lo);
        const double hi = std::min(z1, s.hi);
        if (lo < hi) sum += integrate_terms(s.terms, shift, lo, hi);
        if (s.hi >= z1) break;
    }
    return sum;
}

PiecewiseExpr PiecewiseExpr::scaled(double factor) const {
    auto segs = segments_;
    for (auto& s : segs)
        for (auto& t : s.terms) t.coeff *= factor;
    return PiecewiseExpr(std::move(segs));
}

double eval_coeff(const PiecewiseExpr& f, double x) { return f(x); }

}  // namespace stopflow
