#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stopflow/odesol.hpp"
#include "stopflow/problem.hpp"

namespace stopflow {

enum class BoundaryKind { Interior, DomainEdge };

std::string to_string(BoundaryKind kind);

/// r1 = int_a^b (Pi/sigma^2) phi12(z,b) dz, r2 = int_a^b (Pi/sigma^2) phi22(z,b) dz.
/// Both vanish exactly when v_{a,0} meets zero tangentially at b.
struct BoundaryResidual {
    double r1 = 0.0;
    double r2 = 0.0;
};

struct Certificate {
    double global_min = 0.0;  // curve value where v + tolerance is smallest on the truncation
    double global_min_at = 0.0;
    double margin = 0.0;  // v + tolerance at the worst point; >= 0 when certified
    BoundaryResidual residuals;
};

/// A maximal positivity interval ]a, b[. DomainEdge ends equal m or M.
struct MaximalInterval {
    double a = 0.0;
    double b = 0.0;
    BoundaryKind a_kind = BoundaryKind::Interior;
    BoundaryKind b_kind = BoundaryKind::Interior;
    SolutionCurve curve;
    Certificate certificate;

    bool contains(double x) const { return x > a && x < b; }
};

struct SmoothFit {
    double b = 0.0;
    double psi = 0.0;
};

/// b = first zero of v_{a,0} right of a on `window`, psi = v'_{a,0}(b).
/// Absent when the curve has no zero there or is non-positive right at a.
std::optional<SmoothFit> smooth_fit_residual(const Problem& problem, double a, Truncation window);
std::optional<SmoothFit> smooth_fit_residual(const Problem& problem, double a);

struct TwoSidedRoot {
    double a = 0.0;
    double b = 0.0;
    BoundaryResidual residuals;
    double global_min = 0.0;
    double global_min_at = 0.0;
};

/// Step (I): anchors a with v_{a,0} touching zero tangentially at some b > a
/// and nonnegative over the whole `window`.
std::vector<TwoSidedRoot> two_sided_roots(const Problem& problem, Truncation window,
                                          std::vector<std::string>* warnings = nullptr);

/// Step (I) on the widest truncation.
std::vector<std::pair<double, double>> find_two_sided(const Problem& problem);

struct OneSidedResult {
    std::optional<MaximalInterval> lower;  // ]m, a_hat[
    std::optional<MaximalInterval> upper;  // ]b_hat, M[
    bool any_nonneg_anchor = false;        // on the final truncation
    int level = 0;
    Truncation window;
    std::vector<double> lower_sequence;  // a_hat_n (m_n when the edge itself qualifies)
    std::vector<double> upper_sequence;
};

/// Step (II): extremal globally nonnegative anchors on expanding truncations.
/// Throws TruncationNotConverged when the sequences do not settle.
OneSidedResult find_one_sided(const Problem& problem);

struct IntervalSet {
    std::vector<MaximalInterval> intervals;  // sorted, disjoint
    Truncation window;                      // truncation the certificates refer to
    int level = 0;
    bool whole_domain = false;  // step (III)
    std::vector<std::string> warnings;
};

/// Steps (I)-(III) combined.
IntervalSet maximal_intervals(const Problem& problem);

}  // namespace stopflow
