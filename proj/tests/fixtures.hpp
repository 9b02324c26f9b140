#pragma once

#include <string>
#include <vector>

#include "stopflow/problem.hpp"

namespace fixture {

inline stopflow::ProblemSpec gbm_step(double d1, double d2, double sigma, std::vector<double> knots,
                                      std::vector<double> values) {
    const auto g = stopflow::gbm_from_roots(d1, d2, sigma);
    return stopflow::make_gbm_spec(g.alpha, g.sigma, g.r, stopflow::piecewise_constant(knots, values));
}

/// Pi = -1, +1, -1 with knots x1 < x2; d1 = -2, d2 = -1, sigma = 1.
inline stopflow::ProblemSpec ex1(double x1 = 1.0, double x2 = 2.0, double sigma = 1.0) {
    return gbm_step(-2, -1, sigma, {x1, x2}, {-1, 1, -1});
}

/// Pi positive on [1, 2] and [x3, x4]; d1 = -1, d2 = 1, sigma = 1/3.
inline stopflow::ProblemSpec ex2(double x3, double x4) {
    return gbm_step(-1, 1, 1.0 / 3, {1, 2, x3, x4}, {-1, 1, -1, 1, -1});
}

inline stopflow::ProblemSpec numerical(stopflow::ProblemSpec s) {
    s.backend = stopflow::Backend::Numerical;
    return s;
}

inline std::string config(const std::string& name) { return std::string(STOPFLOW_CONFIG_DIR) + "/" + name + ".json"; }

}  // namespace fixture
