#include "stopflow/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "stopflow/error.hpp"

namespace stopflow {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& ptr, const std::string& what) {
    throw Error(Errc::Config, (ptr.empty() ? std::string("/") : ptr) + ": " + what);
}

void allow_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [k, v] : obj.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) fail(ptr + "/" + k, "unknown key");
    }
}

const json& need(const json& obj, const std::string& ptr, const char* key) {
    if (!obj.contains(key)) fail(ptr + "/" + key, "missing");
    return obj.at(key);
}

/// Number, or one of the strings "inf", "-inf".
double number(const json& v, const std::string& ptr, bool allow_inf = false) {
    if (v.is_number()) return v.get<double>();
    if (allow_inf && v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    fail(ptr, allow_inf ? "expected a number or \"inf\"/\"-inf\"" : "expected a number");
}

double opt_number(const json& obj, const std::string& ptr, const char* key, double fallback) {
    return obj.contains(key) ? number(obj.at(key), ptr + "/" + key) : fallback;
}

int opt_int(const json& obj, const std::string& ptr, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) fail(ptr + "/" + key, "expected an integer");
    return v.get<int>();
}

PiecewiseExpr segments(const json& v, const std::string& ptr) {
    if (!v.is_array() || v.empty()) fail(ptr, "expected a non-empty list of segments");
    std::vector<Segment> segs;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string sp = ptr + "/" + std::to_string(i);
        const auto& s = v[i];
        allow_keys(s, sp, {"from", "to", "terms"});
        Segment seg;
        seg.lo = number(need(s, sp, "from"), sp + "/from", true);
        seg.hi = number(need(s, sp, "to"), sp + "/to", true);
        const auto& terms = need(s, sp, "terms");
        if (!terms.is_array()) fail(sp + "/terms", "expected a list of {c, p}");
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const std::string tp = sp + "/terms/" + std::to_string(k);
            allow_keys(terms[k], tp, {"c", "p"});
            seg.terms.push_back({number(need(terms[k], tp, "c"), tp + "/c"),
                                 terms[k].contains("p") ? number(terms[k].at("p"), tp + "/p") : 0.0});
        }
        segs.push_back(std::move(seg));
    }
    try {
        return PiecewiseExpr(std::move(segs));
    } catch (const Error& e) {
        fail(ptr, e.what());
    }
}

json sentinel(double x) {
    if (x == kInf) return "inf";
    if (x == -kInf) return "-inf";
    return x;
}

json dump_segments(const PiecewiseExpr& f) {
    json out = json::array();
    for (const auto& s : f.segments()) {
        json terms = json::array();
        for (const auto& t : s.terms) terms.push_back({{"c", t.coeff}, {"p", t.exponent}});
        out.push_back({{"from", sentinel(s.lo)}, {"to", sentinel(s.hi)}, {"terms", terms}});
    }
    return out;
}

void apply_override(json& root, const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail("", "override \"" + item + "\" is not key=value");
    std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    if (key.front() != '/') {
        for (auto& c : key)
            if (c == '.') c = '/';
        key = "/" + key;
    }
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    try {
        root[json::json_pointer(key)] = value;
    } catch (const json::exception& e) {
        fail(key, std::string("cannot apply override: ") + e.what());
    }
}

RunInputs build(json root) {
    RunInputs in;
    allow_keys(root, "", {"description", "interval", "coefficients", "gbm", "solver", "mc"});
    ProblemSpec& spec = in.spec;

    const json coeffs = root.contains("coefficients") ? root.at("coefficients") : json::object();
    allow_keys(coeffs, "/coefficients", {"alpha", "sigma", "r", "pi"});
    spec.pi = segments(need(coeffs, "/coefficients", "pi"), "/coefficients/pi");

    if (root.contains("gbm")) {
        const auto& g = root.at("gbm");
        allow_keys(g, "/gbm", {"alpha", "sigma", "r", "d1", "d2"});
        for (const char* k : {"alpha", "sigma", "r"})
            if (coeffs.contains(k)) fail(std::string("/coefficients/") + k, "conflicts with /gbm");
        const double sigma = number(need(g, "/gbm", "sigma"), "/gbm/sigma");
        GbmParams p;
        if (g.contains("d1") || g.contains("d2")) {
            if (g.contains("alpha") || g.contains("r")) fail("/gbm", "give either {alpha, sigma, r} or {d1, d2, sigma}");
            p = gbm_from_roots(number(need(g, "/gbm", "d1"), "/gbm/d1"), number(need(g, "/gbm", "d2"), "/gbm/d2"),
                               sigma);
        } else {
            p.alpha = number(need(g, "/gbm", "alpha"), "/gbm/alpha");
            p.sigma = sigma;
            p.r = number(need(g, "/gbm", "r"), "/gbm/r");
        }
        if (root.contains("interval")) {
            const auto& iv = root.at("interval");
            allow_keys(iv, "/interval", {"m", "M"});
            if (number(need(iv, "/interval", "m"), "/interval/m", true) != 0.0 ||
                number(need(iv, "/interval", "M"), "/interval/M", true) != kInf)
                fail("/interval", "a gbm config lives on (0, inf)");
        }
        ProblemSpec g_spec = make_gbm_spec(p.alpha, p.sigma, p.r, spec.pi);
        spec = std::move(g_spec);
    } else {
        const auto& iv = need(root, "", "interval");
        allow_keys(iv, "/interval", {"m", "M"});
        spec.m = number(need(iv, "/interval", "m"), "/interval/m", true);
        spec.M = number(need(iv, "/interval", "M"), "/interval/M", true);
        spec.alpha = segments(need(coeffs, "/coefficients", "alpha"), "/coefficients/alpha");
        spec.sigma = segments(need(coeffs, "/coefficients", "sigma"), "/coefficients/sigma");
        spec.r = segments(need(coeffs, "/coefficients", "r"), "/coefficients/r");
    }

    if (root.contains("solver")) {
        const auto& s = root.at("solver");
        const std::string p = "/solver";
        allow_keys(s, p,
                   {"ode_rtol", "ode_atol", "root_tol", "nonneg_tol", "hjb_tol", "backend", "anchor_grid",
                    "anchor_levels", "onesided_grid", "scan_points", "truncation_start", "truncation_max", "x_ref"});
        auto& t = spec.tol;
        t.ode_rtol = opt_number(s, p, "ode_rtol", t.ode_rtol);
        t.ode_atol = opt_number(s, p, "ode_atol", t.ode_atol);
        t.root_tol = opt_number(s, p, "root_tol", t.root_tol);
        t.nonneg_tol = opt_number(s, p, "nonneg_tol", t.nonneg_tol);
        t.hjb_tol = opt_number(s, p, "hjb_tol", t.hjb_tol);
        if (s.contains("backend")) {
            const auto& b = s.at("backend");
            const std::string name = b.is_string() ? b.get<std::string>() : "";
            if (name == "auto") spec.backend = Backend::Auto;
            else if (name == "numerical") spec.backend = Backend::Numerical;
            else if (name == "closed_form") spec.backend = Backend::ClosedForm;
            else fail(p + "/backend", "expected \"auto\", \"numerical\" or \"closed_form\"");
        }
        auto& so = spec.search;
        so.anchor_grid = opt_int(s, p, "anchor_grid", so.anchor_grid);
        so.anchor_levels = opt_int(s, p, "anchor_levels", so.anchor_levels);
        so.onesided_grid = opt_int(s, p, "onesided_grid", so.onesided_grid);
        so.scan_points = opt_int(s, p, "scan_points", so.scan_points);
        so.truncation_start = opt_int(s, p, "truncation_start", so.truncation_start);
        so.truncation_max = opt_int(s, p, "truncation_max", so.truncation_max);
        if (s.contains("x_ref")) so.x_ref = number(s.at("x_ref"), p + "/x_ref");
    }

    if (root.contains("mc")) {
        const auto& m = root.at("mc");
        const std::string p = "/mc";
        allow_keys(m, p, {"dt", "horizon", "n_paths", "seed", "scheme", "stop_eps"});
        auto& c = in.mc;
        c.dt = opt_number(m, p, "dt", c.dt);
        c.horizon = opt_number(m, p, "horizon", c.horizon);
        c.stop_eps = opt_number(m, p, "stop_eps", c.stop_eps);
        if (m.contains("n_paths")) {
            if (!m.at("n_paths").is_number_integer() || m.at("n_paths").get<long long>() < 1)
                fail(p + "/n_paths", "expected a positive integer");
            c.n_paths = m.at("n_paths").get<std::int64_t>();
        }
        if (m.contains("seed")) {
            if (!m.at("seed").is_number_unsigned()) fail(p + "/seed", "expected a non-negative integer");
            c.seed = m.at("seed").get<std::uint64_t>();
        }
        if (m.contains("scheme")) {
            const auto& v = m.at("scheme");
            const std::string name = v.is_string() ? v.get<std::string>() : "";
            if (name == "exact_gbm") c.scheme = Scheme::ExactGbm;
            else if (name == "euler") c.scheme = Scheme::EulerMaruyama;
            else fail(p + "/scheme", "expected \"exact_gbm\" or \"euler\"");
        } else if (!root.contains("gbm")) {
            c.scheme = Scheme::EulerMaruyama;
        }
    } else if (!root.contains("gbm")) {
        in.mc.scheme = Scheme::EulerMaruyama;
    }

    // Echo with the gbm shortcut expanded, so the echo parses back to the same problem.
    json echo = root;
    echo.erase("gbm");
    if (!echo.contains("mc")) echo["mc"] = json::object();
    echo["mc"]["scheme"] = in.mc.scheme == Scheme::ExactGbm ? "exact_gbm" : "euler";
    echo["interval"] = {{"m", sentinel(spec.m)}, {"M", sentinel(spec.M)}};
    echo["coefficients"] = {{"alpha", dump_segments(spec.alpha)},
                            {"sigma", dump_segments(spec.sigma)},
                            {"r", dump_segments(spec.r)},
                            {"pi", dump_segments(spec.pi)}};
    in.resolved = echo.dump();
    return in;
}

}  // namespace

RunInputs parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail("", std::string("invalid JSON: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(root, o);
    return build(std::move(root));
}

RunInputs parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::Config, "cannot read config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), overrides);
}

}  // namespace stopflow
