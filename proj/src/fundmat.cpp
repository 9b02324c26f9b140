#include "stopflow/fundmat.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stopflow/error.hpp"

namespace stopflow {

namespace {
constexpr std::size_t kMaxCachedAnchors = 4096;
}

double Mat2::max_abs() const {
    return std::max({std::abs(phi11), std::abs(phi12), std::abs(phi21), std::abs(phi22)});
}

Mat2 Mat2::inverse() const {
    const double d = det();
    return {phi22 / d, -phi12 / d, -phi21 / d, phi11 / d};
}

Mat2 operator*(const Mat2& p, const Mat2& q) {
    return {p.phi11 * q.phi11 + p.phi12 * q.phi21, p.phi11 * q.phi12 + p.phi12 * q.phi22,
            p.phi21 * q.phi11 + p.phi22 * q.phi21, p.phi21 * q.phi12 + p.phi22 * q.phi22};
}

Mat2 operator-(const Mat2& p, const Mat2& q) {
    return {p.phi11 - q.phi11, p.phi12 - q.phi12, p.phi21 - q.phi21, p.phi22 - q.phi22};
}

Mat2 phi_gbm(double d1, double d2, double x, double y) {
    if (!(x > 0.0 && y > 0.0)) {
        std::ostringstream os;
        os << "GBM fundamental matrix needs positive states, got (" << x << ", " << y << ")";
        throw Error(Errc::NonPositiveState, os.str());
    }
    if (!(d1 < d2)) throw Error(Errc::InvalidArgument, "phi_gbm requires d1 < d2");
    if (x == y) return Mat2::identity();
    const double gap = d2 - d1;
    const double log_t = std::log(y / x);
    const double t1 = std::exp(d1 * log_t);  // t^d1
    const double t2 = std::exp(d2 * log_t);  // t^d2
    // t^d2 - t^d1 without cancellation near t = 1
    const double diff = t1 * std::expm1(gap * log_t);
    const double t = y / x;
    Mat2 m;
    m.phi11 = (d2 * t1 - d1 * t2) / gap;
    m.phi12 = x * diff / gap;
    m.phi21 = -d1 * d2 * diff / (t * gap * x);
    m.phi22 = (d2 * t2 - d1 * t1) / (t * gap);
    return m;
}

Mat2 phi_gbm_complex(double re, double im, double x, double y) {
    if (!(x > 0.0 && y > 0.0)) throw Error(Errc::NonPositiveState, "phi_gbm_complex needs x, y > 0");
    if (im == 0.0) throw Error(Errc::InvalidArgument, "phi_gbm_complex needs a non-zero imaginary part");
    const double log_t = std::log(y / x);
    const double ta = std::exp(re * log_t);
    const double c = std::cos(im * log_t);
    const double s = std::sin(im * log_t);
    Mat2 m;
    m.phi11 = ta * (im * c - re * s) / im;
    m.phi12 = ta * x * s / im;
    m.phi21 = -ta * (re * re + im * im) * s / (im * y);
    m.phi22 = ta * (x / y) * (im * c + re * s) / im;
    return m;
}

FundamentalMatrix::FundamentalMatrix(Problem problem, std::optional<FundMode> mode)
    : problem_(std::move(problem)) {
    mode_ = mode.value_or(problem_.closed_form() ? FundMode::GbmClosedForm : FundMode::Numerical);
    if (mode_ == FundMode::GbmClosedForm) {
        if (!problem_.gbm()) {
            throw Error(Errc::InvalidArgument, "closed-form fundamental matrix needs GBM coefficients");
        }
        d1_ = problem_.gbm()->d1();
        d2_ = problem_.gbm()->d2();
    }
}

std::shared_ptr<const FundamentalMatrix::Traj> FundamentalMatrix::trajectory(double a, double b) const {
    double lo = std::min(a, b), hi = std::max(a, b);
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(a);
        if (it != cache_.end()) {
            if (it->second->lo() <= lo && it->second->hi() >= hi) return it->second;
            lo = std::min(lo, it->second->lo());
            hi = std::max(hi, it->second->hi());
        }
    }
    const auto& tol = problem_.tol();
    auto traj = std::make_shared<const Traj>(MatrixField{problem_}, a, rk::Vec<4>{1.0, 0.0, 0.0, 1.0},
                                             lo, hi, problem_.breakpoints(),
                                             rk::Options{tol.ode_rtol, tol.ode_atol});
    std::lock_guard lock(mutex_);
    if (cache_.size() >= kMaxCachedAnchors) cache_.clear();
    auto& slot = cache_[a];
    if (!slot || (slot->lo() >= traj->lo() && slot->hi() <= traj->hi())) slot = traj;
    return traj;
}

Mat2 FundamentalMatrix::operator()(double a, double b) const {
    if (!problem_.in_domain(a) || !problem_.in_domain(b)) {
        std::ostringstream os;
        os << "phi(" << a << ", " << b << ") outside the state interval";
        throw Error(Errc::OutOfRange, os.str());
    }
    if (mode_ == FundMode::GbmClosedForm) return phi_gbm(d1_, d2_, a, b);
    if (a == b) return Mat2::identity();
    const auto traj = trajectory(a, b);
    const auto y = (*traj)(b);
    return {y[0], y[2], y[1], y[3]};
}

Mat2 phi(const FundamentalMatrix& fm, double a, double b) { return fm(a, b); }

}  // namespace stopflow
