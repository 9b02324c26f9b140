#include "stopflow/mc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stopflow/error.hpp"
#include "stopflow/parallel.hpp"

namespace stopflow {

std::string to_string(Scheme s) { return s == Scheme::ExactGbm ? "ExactGbm" : "EulerMaruyama"; }

bool in_rule(const StopRule& rule, double x, double eps) {
    for (const auto& c : rule)
        if (x >= c.lo - eps && x <= c.hi + eps) return true;
    return false;
}

double step_exact_gbm(double x, double alpha, double sigma, double dt, double z) {
    return x * std::exp((alpha - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * z);
}

double step_euler(const Problem& problem, double x, double dt, double z, Truncation window, bool* clamped) {
    double y = x + problem.alpha(x) * dt + problem.sigma(x) * std::sqrt(dt) * z;
    const bool out = !(y > window.lo && y < window.hi);
    if (out) y = std::clamp(y, window.lo, window.hi);
    if (clamped) *clamped = out;
    return y;
}

double step_euler(const Problem& problem, double x, double dt, double z) {
    const auto& s = problem.spec().search;
    return step_euler(problem, x, dt, z, problem.truncation(s.truncation_max));
}

double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

namespace {

std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
    return std::mt19937_64(seq);
}

void check_cfg(const PathConfig& cfg) {
    if (!(cfg.dt > 0.0) || !(cfg.horizon >= cfg.dt) || cfg.n_paths < 1 || !(cfg.stop_eps >= 0.0)) {
        throw Error(Errc::InvalidArgument, "path config needs dt > 0, horizon >= dt, n_paths >= 1, stop_eps >= 0");
    }
}

struct Outcome {
    double value = 0.0;
    bool truncated = false;
    bool edge = false;
};

McEstimate summarize(const std::vector<Outcome>& out) {
    const std::size_t n = out.size();
    std::vector<double> vals(n);
    std::size_t trunc = 0, edge = 0;
    for (std::size_t i = 0; i < n; ++i) {
        vals[i] = out[i].value;
        trunc += out[i].truncated;
        edge += out[i].edge;
    }
    McEstimate e;
    e.n_paths = static_cast<std::int64_t>(n);
    e.mean = pairwise_sum(vals.data(), n) / n;
    for (double& v : vals) v = (v - e.mean) * (v - e.mean);
    const double var = n > 1 ? pairwise_sum(vals.data(), n) / (n - 1) : 0.0;
    e.std_error = std::sqrt(var / n);
    e.truncated_fraction = static_cast<double>(trunc) / n;
    e.edge_fraction = static_cast<double>(edge) / n;
    return e;
}

/// Advances one step of the configured scheme.
struct Stepper {
    const Problem& problem;
    Scheme scheme;
    double dt;
    Truncation window;
    double alpha = 0.0, sigma = 0.0;

    Stepper(const Problem& p, const PathConfig& cfg)
        : problem(p), scheme(cfg.scheme), dt(cfg.dt), window(p.truncation(p.spec().search.truncation_max)) {
        if (scheme == Scheme::ExactGbm) {
            if (!p.gbm()) throw Error(Errc::InvalidArgument, "ExactGbm scheme needs GBM coefficients");
            alpha = p.gbm()->alpha;
            sigma = p.gbm()->sigma;
        }
    }

    double operator()(double x, double z, bool* clamped) const {
        if (scheme == Scheme::ExactGbm) {
            *clamped = false;
            return step_exact_gbm(x, alpha, sigma, dt, z);
        }
        return step_euler(problem, x, dt, z, window, clamped);
    }
};

std::int64_t step_count(const PathConfig& cfg) {
    return static_cast<std::int64_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
}

}  // namespace

McEstimate simulate_payoff(const Problem& problem, const StopRule& rule, double x0, const PathConfig& cfg) {
    check_cfg(cfg);
    if (!problem.in_domain(x0)) throw Error(Errc::OutOfRange, "x0 outside the state interval");
    const Stepper step(problem, cfg);
    const std::int64_t n_steps = step_count(cfg);
    const double dt = cfg.dt;

    std::vector<Outcome> out(static_cast<std::size_t>(cfg.n_paths));
    parallel_for(out.size(), [&](std::size_t i) {
        Outcome& o = out[i];
        if (in_rule(rule, x0, cfg.stop_eps)) return;
        auto rng = path_rng(cfg.seed, i);
        std::normal_distribution<double> normal;
        double x = x0, rho = 0.0, acc = 0.0, r_x = problem.r(x0);
        bool stopped = false;
        for (std::int64_t k = 0; k < n_steps; ++k) {
            acc += std::exp(-rho) * problem.pi(x) * dt;
            bool clamped = false;
            const double y = step(x, normal(rng), &clamped);
            const double r_y = problem.r(y);
            rho += 0.5 * (r_x + r_y) * dt;
            x = y;
            r_x = r_y;
            if (!std::isfinite(acc) || !std::isfinite(rho) || !std::isfinite(x)) {
                std::ostringstream os;
                os << "path " << i << " step " << k << ": x=" << x << " rho=" << rho << " acc=" << acc;
                throw Error(Errc::NonFiniteSample, os.str());
            }
            if (clamped) {
                o.edge = true;
                stopped = true;
                break;
            }
            if (in_rule(rule, x, cfg.stop_eps)) {
                stopped = true;
                break;
            }
        }
        o.value = acc;
        o.truncated = !stopped;
    });
    return summarize(out);
}

double hitting_probability(const Problem& problem, double a, double b, double x) {
    if (!(problem.m() < a && a < x && x < b && b < problem.M())) {
        throw Error(Errc::DegenerateOrdering, "hitting_probability needs m < a < x < b < M");
    }
    if (const auto& g = problem.gbm()) {
        // Scale density (z/a)^(-k) with k = 2 alpha / sigma^2.
        const double k = 2.0 * g->alpha / (g->sigma * g->sigma);
        return power_integral(1.0 - k, a, x) / power_integral(1.0 - k, a, b);
    }

    using boost::math::quadrature::gauss_kronrod;
    std::vector<double> cuts{a};
    for (double p : problem.breakpoints())
        if (p > a && p < b) cuts.push_back(p);
    cuts.push_back(b);

    auto drift_ratio = [&](double z) {
        const double s = problem.sigma(z);
        return 2.0 * problem.alpha(z) / (s * s);
    };
    // Exact antiderivative when sigma is a single power on the piece and the
    // piece is positive; quadrature otherwise.
    auto inner_piece = [&](double z0, double z1) {
        if (z0 == z1) return 0.0;
        const LocalCoeffs lc = problem.local(z0, z1);
        if (z0 > 0.0 && lc.sigma.size() == 1) {
            const PowerTerm s = lc.sigma[0];
            std::vector<PowerTerm> t;
            for (const auto& al : lc.alpha) t.push_back({2.0 * al.coeff / (s.coeff * s.coeff), al.exponent - 2.0 * s.exponent});
            return integrate_terms(t, 0.0, z0, z1);
        }
        return gauss_kronrod<double, 61>::integrate(drift_ratio, z0, z1, 6, 1e-12);
    };
    std::vector<double> inner_at_cut{0.0};
    for (std::size_t i = 1; i < cuts.size(); ++i) inner_at_cut.push_back(inner_at_cut.back() + inner_piece(cuts[i - 1], cuts[i]));

    auto scale_density = [&](double z) {
        const std::size_t i = std::upper_bound(cuts.begin(), cuts.end(), z) - cuts.begin() - 1;
        const std::size_t k = std::min(i, cuts.size() - 2);
        return std::exp(-(inner_at_cut[k] + inner_piece(cuts[k], z)));
    };
    auto s_of = [&](double y) {
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size() && cuts[i] < y; ++i) {
            const double hi = std::min(cuts[i + 1], y);
            total += gauss_kronrod<double, 61>::integrate(scale_density, cuts[i], hi, 10, 1e-12);
        }
        return total;
    };
    return s_of(x) / s_of(b);
}

McEstimate hitting_frequency(const Problem& problem, double a, double b, double x, const PathConfig& cfg) {
    check_cfg(cfg);
    if (!(problem.m() < a && a < x && x < b && b < problem.M())) {
        throw Error(Errc::DegenerateOrdering, "hitting_frequency needs m < a < x < b < M");
    }
    const Stepper step(problem, cfg);
    const std::int64_t n_steps = step_count(cfg);
    const bool log_space = cfg.scheme == Scheme::ExactGbm;
    const double dt = cfg.dt;
    const double la = log_space ? std::log(a) : a, lb = log_space ? std::log(b) : b;

    std::vector<Outcome> out(static_cast<std::size_t>(cfg.n_paths));
    parallel_for(out.size(), [&](std::size_t i) {
        auto rng = path_rng(cfg.seed, i);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        double xs = x;
        Outcome& o = out[i];
        o.truncated = true;
        for (std::int64_t k = 0; k < n_steps; ++k) {
            bool clamped = false;
            const double ys = step(xs, normal(rng), &clamped);
            const double u = unif(rng);
            const double y0 = log_space ? std::log(xs) : xs, y1 = log_space ? std::log(ys) : ys;
            const double vol = log_space ? step.sigma : problem.sigma(xs);
            const double var = vol * vol * dt;
            int hit = 0;  // +1: b, -1: a
            if (y1 >= lb) hit = 1;
            else if (y1 <= la) hit = -1;
            else {
                // Bridge crossing probabilities of each barrier within the step.
                const double pb = std::exp(-2.0 * (lb - y0) * (lb - y1) / var);
                const double pa = std::exp(-2.0 * (y0 - la) * (y1 - la) / var);
                if (u < pb) hit = 1;
                else if (u < pb + pa) hit = -1;
            }
            if (hit != 0 || clamped) {
                o.value = hit > 0 ? 1.0 : 0.0;
                o.truncated = false;
                o.edge = clamped && hit == 0;
                return;
            }
            xs = ys;
        }
    });
    return summarize(out);
}

}  // namespace stopflow
