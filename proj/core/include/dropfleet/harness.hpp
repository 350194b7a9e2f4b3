#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dropfleet/policy.hpp"
#include "dropfleet/sim.hpp"

namespace dropfleet::harness {

/// Reporting periods in hours of day. Peak covers the morning and evening
/// rushes; ticks outside every named period still count toward Overall.
struct Period {
  std::string name;
  std::vector<std::pair<int, int>> hour_ranges;  // [start, end)

  bool contains_hour(int hour) const;
  int hours() const;
};

std::vector<Period> default_periods();  // Peak, Off-peak, Night, Overall

struct PeriodMetrics {
  double revenue_per_vehicle_hour = 0;
  double revenue_std = 0;          // across episodes
  double rejection_rate_pct = 0;   // rejected / arrivals * 100
  double served_rate_pct = 0;
  std::size_t arrivals = 0;
  bool no_demand = false;
};

struct Metrics {
  std::map<std::string, PeriodMetrics> periods;
  double served_rate_pct = 0;  // over the whole horizon
  std::size_t arrivals = 0;
  std::size_t served = 0;
  std::size_t rejected = 0;
  std::size_t pending = 0;
  int episodes = 0;
};

/// Accounting for one finished episode, extracted from a World.
struct EpisodeStats {
  std::vector<double> reward_by_tick;
  std::vector<std::pair<int, sim::RequestStatus>> request_outcomes;  // (tick, status)
  int fleet_size = 0;
  int ticks_per_hour = 60;
};

EpisodeStats episode_stats(const sim::World& world, int ticks_per_hour = 60);

/// Aggregate per-period revenue and rejection over a set of episodes.
Metrics aggregate_metrics(std::span<const EpisodeStats> episodes,
                          const std::vector<Period>& periods);

/// Run `days` greedy-frozen episodes per seed with the given policy and
/// aggregate. Exactly one of `policy` / rule `kind` applies.
Metrics evaluate(const policy::TrainedPolicy* policy, policy::ModelKind kind,
                 const sim::SimConfig& sim_cfg,
                 const demand::DemandSource& source, int days,
                 std::span<const std::uint64_t> seeds,
                 std::vector<EpisodeStats>* episodes_out = nullptr);

/// Probability of touching ring n within n steps, for n = 1..max_ring,
/// estimated by Monte Carlo walks of the chooser on an otherwise empty grid.
std::vector<double> dithering_curve(
    const std::function<Action(HexCoord, Rng&)>& chooser, const GridSpec& grid,
    HexCoord origin, int max_ring, int trials, Rng& rng);

/// Uniform choice over the 7 actions.
std::function<Action(HexCoord, Rng&)> uniform_walk();

/// Per-cell demand minus supply for selected ticks of a recorded episode.
struct GapGrid {
  std::vector<int> ticks;
  std::vector<std::vector<double>> gap;  // per tick, per cell
};

GapGrid gap_grid(const std::vector<std::shared_ptr<const sim::GlobalFrame>>& frames,
                 std::span<const int> ticks);
void dump_gap_csv(const GapGrid& g, const CellIndexer& cells, std::ostream& out);

/// Table row assembled from one finished run directory.
struct RunRow {
  std::string model;
  Metrics metrics;
};

struct CompareReport {
  std::vector<RunRow> rows;
  std::vector<std::string> missing;  // run dirs without metrics
  std::string markdown;
  std::string csv;
};

/// Side-by-side report over finished runs; best value per column is bolded
/// in the markdown rendering, and an improvement column over the dqn row is
/// added when present.
CompareReport compare(const std::vector<std::string>& run_dirs);

void write_metrics_json(const Metrics& m, const std::string& path);
Metrics read_metrics_json(const std::string& path);

void write_event_log(std::span<const sim::Event> events, std::ostream& out);
void write_training_log_csv(std::span<const policy::TrainLogRow> log,
                            std::ostream& out, int moving_average_window = 720);

}  // namespace dropfleet::harness
