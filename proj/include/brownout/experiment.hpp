#pragma once

// Loads a complete simulation run from one JSON document with sections
// engine, cost, controller, brownout, model and workload. Every section and
// field is optional except where noted in the README.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "brownout/moe_core.hpp"
#include "brownout/serve_sim.hpp"
#include "brownout/workload.hpp"

namespace brownout {

struct Experiment {
  SimConfig sim;
  MoELayer layer;
  std::vector<Request> trace;
};

/// Relative file references inside `doc` resolve against `base_dir`.
Experiment experiment_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Experiment load_experiment(const std::string& path);

LengthDistribution length_distribution_from_json(const nlohmann::json& node,
                                                 const std::filesystem::path& base_dir);

}  // namespace brownout
