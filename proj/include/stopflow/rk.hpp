#pragma once

// Adaptive Dormand-Prince 5(4) integration with mandatory breakpoints.
//
// A Field supplies the right-hand side piecewise: field.local(u, w) returns a
// callable f(x, y) valid on the closed smooth piece [u, w]. Steps never cross
// a breakpoint, so each step sees one smooth right-hand side and keeps the
// method's order even when coefficients jump.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "stopflow/error.hpp"

namespace stopflow::rk {

template <std::size_t N>
using Vec = std::array<double, N>;

struct Options {
    double rtol = 1e-10;
    double atol = 1e-12;
    std::size_t max_steps = 5'000'000;
};

template <std::size_t N>
struct Node {
    double x;
    Vec<N> y;
};

namespace detail {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// fifth-order minus embedded fourth-order weights
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

template <std::size_t N>
Vec<N> axpy(const Vec<N>& y, double h, std::initializer_list<std::pair<double, const Vec<N>*>> ks) {
    Vec<N> out = y;
    for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (const auto& [c, k] : ks) acc += c * (*k)[i];
        out[i] += h * acc;
    }
    return out;
}

/// One Dormand-Prince step. Returns the fifth-order solution; fills `err`
/// with the embedded error estimate and `k7` with f(x+h, y5).
template <std::size_t N, class F>
Vec<N> step(F& f, double x, const Vec<N>& y, const Vec<N>& k1, double h, Vec<N>& err, Vec<N>& k7) {
    const Vec<N> k2 = f(x + c2 * h, axpy<N>(y, h, {{a21, &k1}}));
    const Vec<N> k3 = f(x + c3 * h, axpy<N>(y, h, {{a31, &k1}, {a32, &k2}}));
    const Vec<N> k4 = f(x + c4 * h, axpy<N>(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const Vec<N> k5 =
        f(x + c5 * h, axpy<N>(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const Vec<N> k6 =
        f(x + h, axpy<N>(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const Vec<N> y5 =
        axpy<N>(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    k7 = f(x + h, y5);
    for (std::size_t i = 0; i < N; ++i) {
        err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    return y5;
}

template <std::size_t N>
double error_norm(const Vec<N>& err, const Vec<N>& y0, const Vec<N>& y1, const Options& opt) {
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double q = err[i] / sc;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(N));
}

template <std::size_t N>
bool finite(const Vec<N>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

/// Solution of y' = f(x, y), y(anchor) = y0, on [lo, hi], integrated in both
/// directions from the anchor. Evaluation between accepted steps re-runs a
/// single fifth-order step from the left node, which is at least as accurate
/// as the accepted step itself.
template <std::size_t N, class Field>
class Trajectory {
public:
    Trajectory(Field field, double anchor, Vec<N> y0, double lo, double hi,
               std::span<const double> breakpoints, Options opt)
        : field_(std::move(field)), anchor_(anchor), lo_(lo), hi_(hi), opt_(opt) {
        if (!(lo <= anchor && anchor <= hi)) {
            throw Error(Errc::OutOfWindow, "trajectory anchor outside its window");
        }
        std::vector<double> knots;
        for (double b : breakpoints)
            if (b > lo && b < hi && b != anchor) knots.push_back(b);
        std::sort(knots.begin(), knots.end());

        forward_.push_back({anchor, y0});
        backward_.push_back({anchor, y0});
        std::vector<double> fwd_stops, bwd_stops;
        for (double b : knots) (b > anchor ? fwd_stops : bwd_stops).push_back(b);
        fwd_stops.push_back(hi);
        std::reverse(bwd_stops.begin(), bwd_stops.end());
        bwd_stops.push_back(lo);
        if (hi > anchor) integrate(forward_, fwd_stops);
        if (lo < anchor) integrate(backward_, bwd_stops);
    }

    double anchor() const { return anchor_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const Field& field() const { return field_; }

    /// Accepted step nodes, anchor first, moving away from it.
    std::span<const Node<N>> forward() const { return forward_; }
    std::span<const Node<N>> backward() const { return backward_; }

    /// Node abscissae within [a, b] in increasing order (a and b included).
    std::vector<double> nodes(double a, double b) const {
        std::vector<double> xs{a};
        for (auto it = backward_.rbegin(); it != backward_.rend(); ++it)
            if (it->x > a && it->x < b) xs.push_back(it->x);
        for (std::size_t i = 1; i < forward_.size(); ++i)
            if (forward_[i].x > a && forward_[i].x < b) xs.push_back(forward_[i].x);
        if (b > a) xs.push_back(b);
        return xs;
    }

    Vec<N> operator()(double x) const {
        if (!(x >= lo_ && x <= hi_)) {
            std::ostringstream os;
            os << "x=" << x << " outside [" << lo_ << ", " << hi_ << "]";
            throw Error(Errc::OutOfWindow, os.str());
        }
        if (x >= anchor_) {
            auto it = std::upper_bound(forward_.begin(), forward_.end(), x,
                                       [](double v, const Node<N>& n) { return v < n.x; });
            const auto& left = *(it - 1);
            if (x == left.x || it == forward_.end()) return left.y;
            return restep(left, it->x, x);
        }
        auto it = std::upper_bound(backward_.begin(), backward_.end(), x,
                                   [](double v, const Node<N>& n) { return v > n.x; });
        const auto& right = *(it - 1);
        if (x == right.x || it == backward_.end()) return right.y;
        return restep(right, it->x, x);
    }

private:
    Vec<N> restep(const Node<N>& from, double step_end, double x) const {
        auto f = field_.local(std::min(from.x, step_end), std::max(from.x, step_end));
        Vec<N> err, k7;
        const Vec<N> k1 = f(from.x, from.y);
        return detail::step<N>(f, from.x, from.y, k1, x - from.x, err, k7);
    }

    void integrate(std::vector<Node<N>>& out, const std::vector<double>& stops) {
        double x = out.back().x;
        Vec<N> y = out.back().y;
        double h = 0.0;
        std::size_t steps = 0;
        for (double stop : stops) {
            const double dir = stop > x ? 1.0 : -1.0;
            auto f = field_.local(std::min(x, stop), std::max(x, stop));
            Vec<N> k1 = f(x, y);
            if (h == 0.0) h = initial_step(f, x, y, k1, stop);
            h = dir * std::abs(h);
            while (x != stop) {
                if (++steps > opt_.max_steps) {
                    throw Error(Errc::IntegratorFailure, "maximum number of steps exceeded");
                }
                bool last = false;
                if (dir * (x + h - stop) >= 0.0) {
                    h = stop - x;
                    last = true;
                }
                Vec<N> err, k7;
                const Vec<N> y1 = detail::step<N>(f, x, y, k1, h, err, k7);
                double en = detail::finite(y1) && detail::finite(err)
                                ? detail::error_norm<N>(err, y, y1, opt_)
                                : std::numeric_limits<double>::infinity();
                if (en <= 1.0) {
                    x = last ? stop : x + h;
                    y = y1;
                    k1 = k7;
                    out.push_back({x, y});
                    const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
                    h *= fac;
                } else {
                    const double fac =
                        std::isfinite(en) ? std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9) : 0.1;
                    h *= fac;
                    const double floor = 8.0 * std::numeric_limits<double>::epsilon() *
                                         std::max(std::abs(x), std::numeric_limits<double>::min());
                    if (std::abs(h) < floor) {
                        std::ostringstream os;
                        os << "step size underflow at x=" << x;
                        throw Error(Errc::IntegratorFailure, os.str());
                    }
                }
            }
        }
    }

    template <class F>
    double initial_step(F& f, double x, const Vec<N>& y, const Vec<N>& k1, double stop) const {
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / N);
        d1 = std::sqrt(d1 / N);
        double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        const double span = std::abs(stop - x);
        h = std::min(h, span);
        // Keep the first step modest relative to the position for singular-looking fields.
        if (x != 0.0) h = std::min(h, 0.01 * std::abs(x) + 1e-6 * span);
        (void)f;
        return std::max(h, 1e-12 * std::max(span, std::abs(x)));
    }

    Field field_;
    double anchor_;
    double lo_;
    double hi_;
    Options opt_;
    std::vector<Node<N>> forward_;
    std::vector<Node<N>> backward_;
};

}  // namespace stopflow::rk
