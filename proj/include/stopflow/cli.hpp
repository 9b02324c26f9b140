#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stopflow/intervals.hpp"
#include "stopflow/value.hpp"

namespace stopflow {

/// Exit codes of `stopflow`.
enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfig = 2, kExitSolver = 3 };

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Invariants of a solved problem: interval disjointness and coverage of the
/// positive payoff set, certificates, smooth fit, the HJB report, phi12 > 0,
/// the cocycle and Liouville identities of the fundamental matrix.
std::vector<Check> invariant_suite(const Problem& problem, const IntervalSet& set, const ValueFunction& v,
                                   const HjbReport& hjb);

/// Sampling range for CSV output: the Pi breakpoints and finite interval ends,
/// padded, clipped to the window.
Truncation plot_range(const Problem& problem, const ValueFunction& v);

/// Entry point of the command-line tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stopflow
