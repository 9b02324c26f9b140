#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stopflow/problem.hpp"

namespace stopflow {

enum class Scheme { ExactGbm, EulerMaruyama };

std::string to_string(Scheme s);

struct PathConfig {
    double dt = 1e-3;
    double horizon = 200.0;
    Scheme scheme = Scheme::ExactGbm;
    std::uint64_t seed = 1;
    std::int64_t n_paths = 10000;
    double stop_eps = 0.0;  // stop once within stop_eps of a region component
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t n_paths = 0;
    double truncated_fraction = 0.0;  // paths still running at the horizon
    double edge_fraction = 0.0;       // Euler paths clamped at the state window
};

/// Closed intervals in which the process is stopped.
using StopRule = std::vector<Truncation>;

bool in_rule(const StopRule& rule, double x, double eps = 0.0);

/// x exp((alpha - sigma^2/2) dt + sigma sqrt(dt) z).
double step_exact_gbm(double x, double alpha, double sigma, double dt, double z);

/// x + alpha(x) dt + sigma(x) sqrt(dt) z, clamped into `window`; *clamped is
/// set when the clamp was applied.
double step_euler(const Problem& problem, double x, double dt, double z, Truncation window,
                  bool* clamped = nullptr);
double step_euler(const Problem& problem, double x, double dt, double z);

/// Estimate of E[int_0^tau e^{-rho_t} Pi(X_t) dt] with tau the first grid time
/// at which X lies in `rule`. Path i draws from std::mt19937_64 seeded with
/// seed_seq{seed, i} (both as 32-bit halves); payoffs are summed pairwise in
/// path order, so the result does not depend on the worker count.
McEstimate simulate_payoff(const Problem& problem, const StopRule& rule, double x0, const PathConfig& cfg);

/// P_x(X reaches b before a) = s(x) / s(b), s(y) = int_a^y exp(-int_a^z 2 alpha/sigma^2).
double hitting_probability(const Problem& problem, double a, double b, double x);

/// Simulated frequency of reaching b before a. Crossings between grid times
/// are detected with the Brownian-bridge probability of the log (ExactGbm) or
/// frozen-coefficient (Euler) increment.
McEstimate hitting_frequency(const Problem& problem, double a, double b, double x, const PathConfig& cfg);

/// Pairwise sum in index order.
double pairwise_sum(const double* v, std::size_t n);

}  // namespace stopflow
