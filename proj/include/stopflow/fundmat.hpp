#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "stopflow/problem.hpp"
#include "stopflow/rk.hpp"

namespace stopflow {

struct Mat2 {
    double phi11 = 1.0;
    double phi12 = 0.0;
    double phi21 = 0.0;
    double phi22 = 1.0;

    static Mat2 identity() { return {}; }
    double det() const { return phi11 * phi22 - phi12 * phi21; }
    double max_abs() const;
    Mat2 inverse() const;
    friend Mat2 operator*(const Mat2& p, const Mat2& q);
    friend Mat2 operator-(const Mat2& p, const Mat2& q);
};

/// Closed-form fundamental matrix of the GBM equation for distinct real roots
/// d1 < d2. Throws NonPositiveState unless x, y > 0.
Mat2 phi_gbm(double d1, double d2, double x, double y);

/// Closed form for complex roots re +- i im. Such problems are rejected by
/// validate(); this exists to study the sign structure of phi12 near its zeros.
Mat2 phi_gbm_complex(double re, double im, double x, double y);

/// Right-hand side of d/dy Phi(x, y) = A(y) Phi(x, y), stored column-major
/// as (phi11, phi21, phi12, phi22).
struct MatrixField {
    Problem problem;
    auto local(double u, double w) const {
        const LocalCoeffs lc = problem.local(u, w);
        return [lc](double x, const rk::Vec<4>& y) {
            const OdeCoeffs c = lc.at(x);
            return rk::Vec<4>{y[1], c.a21 * y[0] + c.a22 * y[1], y[3], c.a21 * y[2] + c.a22 * y[3]};
        };
    }
};

enum class FundMode { Numerical, GbmClosedForm };

/// Evaluator of Phi(a, b). Numerical mode integrates the matrix equation from
/// the identity at `a`, stepping exactly onto every coefficient breakpoint,
/// and keeps the resulting trajectory per anchor. The cache is guarded by a
/// mutex and stores immutable trajectories, so concurrent callers always see
/// a complete trajectory.
class FundamentalMatrix {
public:
    explicit FundamentalMatrix(Problem problem, std::optional<FundMode> mode = std::nullopt);

    FundMode mode() const { return mode_; }
    const Problem& problem() const { return problem_; }

    Mat2 operator()(double a, double b) const;

private:
    using Traj = rk::Trajectory<4, MatrixField>;
    std::shared_ptr<const Traj> trajectory(double a, double b) const;

    Problem problem_;
    FundMode mode_;
    double d1_ = 0.0;
    double d2_ = 0.0;
    mutable std::mutex mutex_;
    mutable std::map<double, std::shared_ptr<const Traj>> cache_;
};

Mat2 phi(const FundamentalMatrix& fm, double a, double b);

}  // namespace stopflow
