#pragma once

#include "midscale/experiments.hpp"
#include "midscale/sinkhorn.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace midscale {

inline nlohmann::json solution_to_json(const DualSolution& s) {
  nlohmann::json j;
  j["eps"] = s.eps;
  j["f"] = std::vector<double>(s.f.data(), s.f.data() + s.f.size());
  j["g"] = std::vector<double>(s.g.data(), s.g.data() + s.g.size());
  j["residual"] = s.marginal_residual;
  j["iterations"] = s.iterations;
  return j;
}

/// Sidecar entry for one result table: the fitted slope and everything needed
/// to reproduce the run, minus the raw per-replicate numbers (those live in
/// the CSV).
inline nlohmann::json table_to_json(const RateTable& t) {
  nlohmann::json j;
  j["experiment"] = t.experiment;
  j["grid_var"] = t.grid_var;
  j["grid"] = t.grid;
  j["mean_errors"] = t.mean_errors();
  j["stderr_of_means"] = t.stderr_of_means();
  j["signed_errors"] = t.signed_errors;
  j["slope_valid"] = t.slope_valid;
  if (t.slope_valid) {
    j["slope"] = t.slope;
    j["slope_stderr"] = t.slope_se;
  }
  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [k, v] : t.metadata) meta[k] = v;
  j["metadata"] = meta;
  return j;
}

}  // namespace midscale
