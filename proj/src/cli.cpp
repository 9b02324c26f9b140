#include "stopflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stopflow/config.hpp"
#include "stopflow/error.hpp"
#include "stopflow/fundmat.hpp"
#include "stopflow/mc.hpp"

namespace stopflow {

namespace {

std::vector<double> sample(Truncation r, int n) {
    std::vector<double> xs;
    n = std::max(n, 2);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        xs.push_back(r.lo > 0.0 ? r.lo * std::pow(r.hi / r.lo, t) : r.lo + t * (r.hi - r.lo));
    }
    return xs;
}

/// Midpoint of a Pi segment, pushed inside when an end is infinite.
double segment_probe(const Segment& s) {
    if (std::isfinite(s.lo) && std::isfinite(s.hi)) return 0.5 * (s.lo + s.hi);
    if (std::isfinite(s.lo)) return s.lo > 0.0 ? 2.0 * s.lo : s.lo + 1.0;
    if (std::isfinite(s.hi)) return s.hi - 1.0;
    return 0.0;
}

std::string fmt(double x, int prec = 6) {
    std::ostringstream os;
    if (std::isinf(x)) os << (x > 0 ? "inf" : "-inf");
    else os << std::setprecision(prec) << x;
    return os.str();
}

}  // namespace

Truncation plot_range(const Problem& problem, const ValueFunction& v) {
    std::vector<double> pts(problem.pi_breakpoints().begin(), problem.pi_breakpoints().end());
    for (const auto& iv : v.intervals()) {
        if (std::isfinite(iv.a) && iv.a_kind == BoundaryKind::Interior) pts.push_back(iv.a);
        if (std::isfinite(iv.b) && iv.b_kind == BoundaryKind::Interior) pts.push_back(iv.b);
    }
    const Truncation w = v.window();
    if (pts.empty()) return w;
    const auto [lo_it, hi_it] = std::minmax_element(pts.begin(), pts.end());
    Truncation r;
    if (*lo_it > 0.0) {
        r = {0.5 * *lo_it, 1.5 * *hi_it};
    } else {
        const double pad = 0.5 * (*hi_it - *lo_it) + 1.0;
        r = {*lo_it - pad, *hi_it + pad};
    }
    r.lo = std::max(r.lo, w.lo);
    r.hi = std::min(r.hi, w.hi);
    return r;
}

std::vector<Check> invariant_suite(const Problem& problem, const IntervalSet& set, const ValueFunction& v,
                                   const HjbReport& hjb) {
    std::vector<Check> out;
    const auto& tol = problem.tol();
    const auto& ivs = set.intervals;

    {
        Check c{"maximal intervals disjoint", true, std::to_string(ivs.size()) + " interval(s)"};
        for (std::size_t i = 1; i < ivs.size(); ++i)
            if (ivs[i].a < ivs[i - 1].b - 10.0 * tol.root_tol) c.passed = false;
        out.push_back(c);
    }
    {
        Check c{"positive payoff covered", true, ""};
        int probes = 0;
        for (const auto& s : problem.spec().pi.segments()) {
            const double x = segment_probe(s);
            if (!problem.in_domain(x) || !(problem.pi(x) > 0.0)) continue;
            ++probes;
            bool covered = false;
            for (const auto& iv : ivs) covered = covered || iv.contains(x);
            if (!covered) {
                c.passed = false;
                c.detail += "uncovered " + fmt(x) + " ";
            }
        }
        if (c.passed) c.detail = std::to_string(probes) + " positive segment(s)";
        out.push_back(c);
    }
    {
        double worst = 0.0, margin = kInf;
        for (const auto& iv : ivs) {
            worst = std::min(worst, iv.certificate.global_min);
            margin = std::min(margin, iv.certificate.margin);
        }
        out.push_back({"certificates nonnegative", margin >= 0.0, "global min " + fmt(worst)});
    }
    out.push_back({"smooth fit at interior ends", hjb.max_boundary_jump <= 1e-6,
                   "max |V|,|V'| " + fmt(hjb.max_boundary_jump)});
    out.push_back({"HJB residual on continuation", hjb.max_violation_continue <= hjb.tol,
                   fmt(hjb.max_violation_continue) + " <= " + fmt(hjb.tol)});
    out.push_back({"-Pi >= 0 on stopping region", hjb.max_violation_stop <= hjb.tol,
                   "max Pi there " + fmt(hjb.max_violation_stop)});
    out.push_back({"V nonnegative", hjb.min_V >= -hjb.nonneg_threshold, "min scaled V " + fmt(hjb.min_V)});
    out.push_back({"finite-difference V'' probe", hjb.max_fd_mismatch <= 1e-3, "rel " + fmt(hjb.max_fd_mismatch)});

    // Fundamental matrix identities on a grid of the plotting range.
    const FundamentalMatrix fm(problem);
    const auto xs = sample(plot_range(problem, v), 8);
    double min_phi12 = kInf, cocycle = 0.0, liouville = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
            const Mat2 p = fm(xs[i], xs[j]);
            min_phi12 = std::min(min_phi12, p.phi12);
            for (std::size_t k = j + 1; k < xs.size(); ++k) {
                const Mat2 direct = fm(xs[i], xs[k]);
                const Mat2 chained = fm(xs[j], xs[k]) * p;
                cocycle = std::max(cocycle, (direct - chained).max_abs() / std::max(1.0, direct.max_abs()));
            }
            auto ratio = [&](double z) {
                const double s = problem.sigma(z);
                return 2.0 * problem.alpha(z) / (s * s);
            };
            double integral = 0.0;
            std::vector<double> cuts{xs[i]};
            for (double b : problem.breakpoints())
                if (b > xs[i] && b < xs[j]) cuts.push_back(b);
            cuts.push_back(xs[j]);
            for (std::size_t k = 1; k < cuts.size(); ++k)
                integral += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(ratio, cuts[k - 1], cuts[k],
                                                                                          10, 1e-12);
            const double expect = std::exp(-integral);
            liouville = std::max(liouville, std::abs(p.det() - expect) / std::max(1.0, expect));
        }
    }
    out.push_back({"phi12 > 0", min_phi12 > 0.0, "min " + fmt(min_phi12)});
    out.push_back({"cocycle identity", cocycle <= 1e-7, "rel " + fmt(cocycle)});
    out.push_back({"Liouville determinant", liouville <= 1e-8, "rel " + fmt(liouville)});
    return out;
}

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir = ".";
    int precision = 12;
    int grid = 1001;
};

void echo(std::ostream& out, const Common& c, const RunInputs& in) {
    out << "config: " << c.config << '\n';
    out << "resolved: " << in.resolved << '\n';
    out << "seed: " << in.mc.seed << '\n';
}

std::ofstream open_csv(const Common& c, const std::string& name, std::ostream& out) {
    std::filesystem::create_directories(c.out_dir);
    const auto path = std::filesystem::path(c.out_dir) / name;
    std::ofstream f(path);
    if (!f) throw Error(Errc::Config, "cannot write " + path.string());
    f << std::setprecision(c.precision);
    out << "wrote " << path.string() << '\n';
    return f;
}

void print_intervals(std::ostream& out, const IntervalSet& set) {
    out << "maximal intervals: " << set.intervals.size() << " (truncation level " << set.level << ", window ["
        << fmt(set.window.lo, 12) << ", " << fmt(set.window.hi, 12) << "])\n";
    for (std::size_t k = 0; k < set.intervals.size(); ++k) {
        const auto& iv = set.intervals[k];
        out << "  interval " << k + 1 << ": (" << std::fixed << std::setprecision(6);
        if (std::isinf(iv.a)) out << fmt(iv.a);
        else out << iv.a;
        out << ", ";
        if (std::isinf(iv.b)) out << fmt(iv.b);
        else out << iv.b;
        out << ")" << std::defaultfloat;
        out << "  a=" << fmt(iv.a, 12) << " [" << to_string(iv.a_kind) << "]"
            << "  b=" << fmt(iv.b, 12) << " [" << to_string(iv.b_kind) << "]"
            << "  global_min=" << fmt(iv.certificate.global_min, 3) << "  residuals=(" << fmt(iv.certificate.residuals.r1, 3)
            << ", " << fmt(iv.certificate.residuals.r2, 3) << ")\n";
    }
    if (set.whole_domain) out << "  the whole state interval is maximal\n";
    for (const auto& w : set.warnings) out << "warning: " << w << '\n';
}

void write_value_csv(const Common& c, const ValueFunction& v, const Truncation& range, std::ostream& out) {
    auto f = open_csv(c, "value_function.csv", out);
    f << "x,V,dV\n";
    for (double x : sample(range, c.grid)) {
        const CurvePoint p = v(x);
        f << x << ',' << p.v << ',' << p.dv << '\n';
    }
}

struct Solved {
    Problem problem;
    IntervalSet set;
    ValueFunction value;
};

Solved solve(const RunInputs& in, std::ostream& out) {
    Problem p = validate(in.spec);
    for (const auto& n : p.notes()) out << "note: " << n << '\n';
    if (p.closed_form()) out << "backend: GBM closed form\n";
    else out << "backend: numerical integration\n";
    IntervalSet set = maximal_intervals(p);
    ValueFunction v = assemble(p, set);
    return {p, std::move(set), std::move(v)};
}

int cmd_solve(const Common& c, const RunInputs& in, std::ostream& out) {
    const Solved s = solve(in, out);
    print_intervals(out, s.set);
    write_value_csv(c, s.value, plot_range(s.problem, s.value), out);
    return kExitOk;
}

int cmd_verify(const Common& c, const RunInputs& in, std::ostream& out) {
    const Solved s = solve(in, out);
    print_intervals(out, s.set);
    const HjbReport hjb = hjb_residual(s.value, 4096);
    {
        auto f = open_csv(c, "hjb.csv", out);
        f << "x,residual,region\n";
        for (std::size_t i = 0; i < hjb.grid.size(); ++i)
            f << hjb.grid[i] << ',' << hjb.residual[i] << ',' << (hjb.continuation[i] ? "continue" : "stop") << '\n';
    }
    bool all = true;
    for (const auto& ch : invariant_suite(s.problem, s.set, s.value, hjb)) {
        out << (ch.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(32) << ch.name << std::right << ch.detail
            << '\n';
        all = all && ch.passed;
    }
    out << (all ? "verify: all checks passed\n" : "verify: FAILED\n");
    return all ? kExitOk : kExitVerifyFailed;
}

int cmd_mc(const Common&, const RunInputs& in, double x0, std::ostream& out) {
    const Solved s = solve(in, out);
    print_intervals(out, s.set);
    const double v0 = s.value(x0).v;
    const StopRule rule = stopping_region(s.value);
    const McEstimate e = simulate_payoff(s.problem, rule, x0, in.mc);
    const double z = e.std_error > 0.0 ? (e.mean - v0) / e.std_error : (e.mean == v0 ? 0.0 : kInf);
    out << std::setprecision(8);
    out << "mc: scheme=" << to_string(in.mc.scheme) << " dt=" << in.mc.dt << " horizon=" << in.mc.horizon
        << " paths=" << e.n_paths << " seed=" << in.mc.seed << '\n';
    out << "mc: estimate=" << e.mean << " std_error=" << e.std_error << " V(x0)=" << v0 << " z=" << z << '\n';
    if (e.truncated_fraction > 0.0) out << "mc: truncated_fraction=" << e.truncated_fraction << '\n';
    if (e.edge_fraction > 0.0) out << "mc: edge_fraction=" << e.edge_fraction << '\n';
    if (e.truncated_fraction >= 1e-3) out << "mc: warning: truncated fraction above 1e-3\n";
    const bool ok = std::abs(z) <= 3.0;
    out << (ok ? "mc: |z| <= 3\n" : "mc: |z| > 3\n");
    return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_hitprob(const Common&, const RunInputs& in, double a, double b, double x0, std::ostream& out) {
    const Problem p = validate(in.spec);
    const double formula = hitting_probability(p, a, b, x0);
    const McEstimate e = hitting_frequency(p, a, b, x0, in.mc);
    const double se = std::sqrt(formula * (1.0 - formula) / e.n_paths);
    const double z = (e.mean - formula) / se;
    out << std::setprecision(10);
    out << "hitprob: P(hit " << b << " before " << a << " | x=" << x0 << ") formula=" << formula << '\n';
    out << "hitprob: frequency=" << e.mean << " paths=" << e.n_paths << " binomial_se=" << se << " z=" << z << '\n';
    if (e.truncated_fraction > 0.0) out << "hitprob: truncated_fraction=" << e.truncated_fraction << '\n';
    const bool ok = std::abs(z) <= 3.0;
    out << (ok ? "hitprob: |z| <= 3\n" : "hitprob: |z| > 3\n");
    return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_plot(const Common& c, const RunInputs& in, std::ostream& out) {
    const Solved s = solve(in, out);
    print_intervals(out, s.set);
    const Truncation range = plot_range(s.problem, s.value);
    const auto xs = sample(range, c.grid);
    {
        auto f = open_csv(c, "pi.csv", out);
        f << "x,pi\n";
        for (double x : xs) f << x << ',' << s.problem.pi(x) << '\n';
    }
    write_value_csv(c, s.value, range, out);

    // Candidate curves v_{a,0}: interval ends plus a few anchors where Pi < 0.
    std::vector<double> anchors;
    for (const auto& iv : s.set.intervals) {
        if (iv.a_kind == BoundaryKind::Interior) anchors.push_back(iv.a);
        if (iv.b_kind == BoundaryKind::Interior) anchors.push_back(iv.b);
    }
    for (double x : sample(range, 9))
        if (s.problem.pi(x) < 0.0 && x > range.lo && x < range.hi) anchors.push_back(x);
    std::sort(anchors.begin(), anchors.end());

    auto f = open_csv(c, "curves.csv", out);
    f << "x,curve_id,v,dv\n";
    for (std::size_t k = 0; k < s.set.intervals.size(); ++k) {
        const auto& iv = s.set.intervals[k];
        for (double x : xs)
            if (iv.contains(x)) {
                const CurvePoint p = iv.curve.eval(x);
                f << x << ",interval_" << k + 1 << ',' << p.v << ',' << p.dv << '\n';
            }
    }
    const Truncation w = s.set.window;
    for (double a : anchors) {
        std::ostringstream id;
        id << "v_a0_" << std::setprecision(6) << a;
        const SolutionCurve cv = v_curve(s.problem, a, 0.0, w);
        for (double x : xs) {
            const CurvePoint p = cv.eval(x);
            f << x << ',' << id.str() << ',' << p.v << ',' << p.dv << '\n';
        }
    }
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"stopflow: optimal stopping of one-dimensional diffusions with a running reward"};
    app.require_subcommand(1);
    Common common;
    double x0 = 0.0, a = 0.0, b = 0.0;
    std::int64_t paths = 0;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", common.config, "problem config (JSON)")->required();
        sub->add_option("--set", common.overrides, "override a config entry, e.g. solver.root_tol=1e-10");
        sub->add_option("--out", common.out_dir, "directory for CSV output");
        sub->add_option("--grid", common.grid, "CSV sample count")->check(CLI::PositiveNumber);
        sub->add_option("--precision", common.precision, "CSV significant digits")->check(CLI::Range(1, 17));
    };
    auto* solve_cmd = app.add_subcommand("solve", "locate maximal intervals and write value_function.csv");
    auto* verify_cmd = app.add_subcommand("verify", "solve, then check HJB and structural invariants");
    auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo payoff of the computed rule versus V(x0)");
    auto* hit_cmd = app.add_subcommand("hitprob", "hitting probability: formula versus simulation");
    auto* plot_cmd = app.add_subcommand("plot-data", "write pi.csv, value_function.csv and curves.csv");
    for (auto* sub : {solve_cmd, verify_cmd, mc_cmd, hit_cmd, plot_cmd}) add_common(sub);
    for (auto* sub : {mc_cmd, hit_cmd}) {
        sub->add_option("--x0", x0, "starting state")->required();
        sub->add_option("--paths", paths, "number of paths")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "RNG seed");
    }
    hit_cmd->add_option("--a", a, "lower barrier")->required();
    hit_cmd->add_option("--b", b, "upper barrier")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    auto opt_paths = [&](CLI::App* sub) {
        return sub->count("--paths") ? std::optional<std::int64_t>(paths) : std::nullopt;
    };
    auto opt_seed = [&](CLI::App* sub) {
        return sub->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt;
    };

    // --seed and --paths act as config overrides so the echo shows the values used.
    for (auto* sub : {mc_cmd, hit_cmd}) {
        if (!*sub) continue;
        if (auto s = opt_seed(sub)) common.overrides.push_back("/mc/seed=" + std::to_string(*s));
        if (auto n = opt_paths(sub)) common.overrides.push_back("/mc/n_paths=" + std::to_string(*n));
    }

    RunInputs in;
    try {
        in = parse_config(common.config, common.overrides);
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    echo(out, common, in);

    try {
        if (*solve_cmd) return cmd_solve(common, in, out);
        if (*verify_cmd) return cmd_verify(common, in, out);
        if (*mc_cmd) return cmd_mc(common, in, x0, out);
        if (*hit_cmd) return cmd_hitprob(common, in, a, b, x0, out);
        if (*plot_cmd) return cmd_plot(common, in, out);
    } catch (const Error& e) {
        switch (e.code()) {
            case Errc::Config:
            case Errc::MalformedSegments:
            case Errc::SigmaNonPositive:
            case Errc::DegenerateSign:
            case Errc::IllPosedGbm:
            case Errc::InvalidArgument:
            case Errc::DegenerateOrdering:
            case Errc::OutOfRange:
                err << "config error: " << e.what() << '\n';
                return kExitConfig;
            default:
                err << "solver failure: " << e.what() << '\n';
                return kExitSolver;
        }
    }
    return kExitConfig;
}

}  // namespace stopflow
