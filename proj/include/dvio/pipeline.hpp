#pragma once

#include <map>
#include <string>

#include "dvio/config.hpp"

namespace dvio::pipeline {

struct RunResult {
  std::map<std::string, double> metrics;
  std::string summary;

  double metric(const std::string& name, double fallback) const {
    auto it = metrics.find(name);
    return it == metrics.end() ? fallback : it->second;
  }
};

// Each command resolves its configuration (defaults filled in), writes its
// artifacts plus a config.echo reproducing the run into cfg["out"], and
// returns headline metrics. Re-running with the same resolved configuration
// rewrites byte-identical outputs.
RunResult run_gen(const Config& cfg);
RunResult run_train(const Config& cfg);
RunResult run_eval(const Config& cfg);
RunResult run_bound(const Config& cfg);
RunResult run_fly(const Config& cfg);
RunResult run_report(const Config& cfg);

}  // namespace dvio::pipeline
