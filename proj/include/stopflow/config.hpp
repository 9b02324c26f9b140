#pragma once

#include <string>
#include <vector>

#include "stopflow/mc.hpp"
#include "stopflow/problem.hpp"

namespace stopflow {

struct RunInputs {
    ProblemSpec spec;
    PathConfig mc;
    std::string resolved;  // the config after overrides and gbm expansion, as JSON
};

/// Reads a JSON problem config. `overrides` are "pointer=value" strings, e.g.
/// "/solver/root_tol=1e-10" or "solver.root_tol=1e-10"; values are parsed as
/// JSON when possible and kept as strings otherwise. Schema violations throw
/// Error(Errc::Config) naming the offending JSON pointer.
RunInputs parse_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunInputs parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

}  // namespace stopflow
