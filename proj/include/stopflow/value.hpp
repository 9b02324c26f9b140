#pragma once

#include <optional>
#include <vector>

#include "stopflow/intervals.hpp"

namespace stopflow {

/// V = v^{[a_k,b_k]} on each maximal interval, 0 elsewhere, on a truncation.
class ValueFunction {
public:
    ValueFunction(Problem problem, std::vector<MaximalInterval> intervals, Truncation window);

    const Problem& problem() const { return problem_; }
    const std::vector<MaximalInterval>& intervals() const { return intervals_; }
    Truncation window() const { return window_; }

    /// Index of the interval whose open span contains x.
    std::optional<std::size_t> owner(double x) const;

    /// (V, V'); throws OutOfRange outside the window.
    CurvePoint operator()(double x) const;

private:
    Problem problem_;
    std::vector<MaximalInterval> intervals_;
    Truncation window_;
};

/// Throws OverlappingIntervals unless the intervals are sorted and disjoint.
ValueFunction assemble(const Problem& problem, std::vector<MaximalInterval> intervals, Truncation window);
ValueFunction assemble(const Problem& problem, const IntervalSet& set);

CurvePoint evaluate(const ValueFunction& v, double x);

struct HjbReport {
    std::vector<double> grid;
    std::vector<double> residual;     // r V - alpha V' - (sigma^2/2) V'' - Pi
    std::vector<char> continuation;   // V > 0 region flag per grid point
    double max_violation_continue = 0.0;
    double max_violation_stop = 0.0;  // max of Pi over {V = 0}
    double min_V = 0.0;  // min of V / max(1, representation scale), see SolutionCurve::scale_at
    double max_V = 0.0;
    double nonneg_threshold = 0.0;  // allowed -min_V: nonneg_tol, plus integration error for numeric curves
    double max_fd_mismatch = 0.0;     // finite-difference V'' probe, relative
    double max_boundary_jump = 0.0;   // |V|, |V'| at interior ends, from inside
    double tol = 0.0;                 // hjb_tol scaled by max(1, max|Pi|)

    bool passed(const Tolerances& t) const;
};

/// Residual on an n_grid-point grid of the window (geometric when the window
/// is positive), skipping coefficient breakpoints.
HjbReport hjb_residual(const ValueFunction& v, int n_grid = 4096);

/// Closed complement of the maximal intervals within the window.
std::vector<Truncation> stopping_region(const ValueFunction& v);

}  // namespace stopflow
