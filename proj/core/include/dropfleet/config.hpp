#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dropfleet/demand.hpp"
#include "dropfleet/policy.hpp"
#include "dropfleet/sim.hpp"

namespace dropfleet::config {

enum class DemandMode { kSynthetic, kReplay, kPoisson };

struct DemandSpec {
  DemandMode mode = DemandMode::kSynthetic;
  std::string trips_csv;
  int tick_seconds = 60;
  demand::Projection projection;
  double base_rate = 0.0;
  std::vector<demand::Hotspot> hotspots;
  std::optional<std::vector<double>> dest_weights;
};

struct EvalSpec {
  int days = 2;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

/// Everything one run needs, schema-validated: unknown keys are rejected so
/// typos fail loudly instead of silently using defaults.
struct RunConfig {
  sim::SimConfig sim;
  DemandSpec demand;
  policy::ModelKind model = policy::ModelKind::kDrdqn;
  std::uint64_t seed = 1;
  policy::TrainConfig training;
  EvalSpec evaluation;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);

/// Materialize the configured demand source (reads the trip CSV for replay
/// and poisson modes; the report is written next to other run outputs).
demand::DemandSource make_demand_source(const RunConfig& cfg,
                                        demand::LoadReport* report = nullptr);

}  // namespace dropfleet::config
