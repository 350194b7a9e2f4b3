#include "dropfleet/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dropfleet/config.hpp"

using namespace dropfleet;
using namespace dropfleet::harness;

namespace fs = std::filesystem;

namespace {

EpisodeStats stats_with(int fleet, std::vector<std::pair<int, double>> tick_rewards,
                        std::vector<std::pair<int, sim::RequestStatus>> outcomes,
                        int ticks = 1440) {
  EpisodeStats s;
  s.fleet_size = fleet;
  s.ticks_per_hour = 60;
  s.reward_by_tick.assign(static_cast<std::size_t>(ticks), 0.0);
  for (const auto& [tick, r] : tick_rewards) s.reward_by_tick[static_cast<std::size_t>(tick)] = r;
  s.request_outcomes = std::move(outcomes);
  return s;
}

}  // namespace

TEST(Periods, DefaultLayout) {
  const auto periods = default_periods();
  ASSERT_EQ(periods.size(), 4u);
  const Period& peak = periods[0];
  EXPECT_TRUE(peak.contains_hour(8));
  EXPECT_TRUE(peak.contains_hour(19));
  EXPECT_FALSE(peak.contains_hour(10));
  EXPECT_EQ(peak.hours(), 4);
  EXPECT_EQ(periods[1].hours(), 4);
  EXPECT_EQ(periods[2].hours(), 2);
  EXPECT_EQ(periods[3].hours(), 24);
}

TEST(AggregateMetrics, ZeroDemandFlagsAndZeros) {
  const auto m = aggregate_metrics(
      std::vector<EpisodeStats>{stats_with(3, {}, {})}, default_periods());
  EXPECT_EQ(m.arrivals, 0u);
  EXPECT_EQ(m.served_rate_pct, 0.0);
  for (const auto& [name, pm] : m.periods) {
    EXPECT_TRUE(pm.no_demand) << name;
    EXPECT_EQ(pm.rejection_rate_pct, 0.0);
    EXPECT_EQ(pm.revenue_per_vehicle_hour, 0.0);
  }
}

TEST(AggregateMetrics, SingleServedRequestLandsInPeak) {
  // Fare 10 at hour 9 (tick 540), one vehicle.
  const auto m = aggregate_metrics(
      std::vector<EpisodeStats>{stats_with(
          1, {{540, 10.0}}, {{540, sim::RequestStatus::kCompleted}})},
      default_periods());
  EXPECT_DOUBLE_EQ(m.periods.at("peak").revenue_per_vehicle_hour, 10.0 / 4);
  EXPECT_DOUBLE_EQ(m.periods.at("overall").revenue_per_vehicle_hour, 10.0 / 24);
  EXPECT_DOUBLE_EQ(m.periods.at("night").revenue_per_vehicle_hour, 0.0);
  EXPECT_DOUBLE_EQ(m.periods.at("peak").served_rate_pct, 100.0);
  EXPECT_EQ(m.served, 1u);
}

TEST(AggregateMetrics, AccountingIdentity) {
  const auto m = aggregate_metrics(
      std::vector<EpisodeStats>{stats_with(
          2, {},
          {{10, sim::RequestStatus::kCompleted},
           {20, sim::RequestStatus::kRejected},
           {30, sim::RequestStatus::kOpen},
           {700, sim::RequestStatus::kCompleted}})},
      default_periods());
  EXPECT_EQ(m.served + m.rejected + m.pending, m.arrivals);
  EXPECT_EQ(m.arrivals, 4u);
  EXPECT_EQ(m.pending, 1u);
}

TEST(DitheringCurve, UniformWalkMatchesTheory) {
  Rng rng(81);
  const GridSpec grid{8, 600.0, 600.0};
  const auto curve = dithering_curve(uniform_walk(), grid, {0, 0}, 3, 40000, rng);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_NEAR(curve[0], 6.0 / 7.0, 0.01);
  EXPECT_NEAR(curve[1], 18.0 / 49.0, 0.02);
  for (std::size_t n = 1; n < curve.size(); ++n) EXPECT_LE(curve[n], curve[n - 1]);
}

TEST(DitheringCurve, DecisiveEastPolicyAlwaysArrives) {
  Rng rng(82);
  const GridSpec grid{6, 600.0, 600.0};
  const auto east = [](HexCoord, Rng&) { return Action::kEast; };
  const auto curve = dithering_curve(east, grid, {0, 0}, 5, 200, rng);
  for (double p : curve) EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(GapGrid, CountsDemandMinusSupply) {
  auto frame = std::make_shared<sim::GlobalFrame>();
  frame->tick = 0;
  frame->idle = {3, 0};
  frame->requests = {1, 0};
  frame->busy = {0, 0};
  const std::vector<std::shared_ptr<const sim::GlobalFrame>> frames{frame};
  const GapGrid g = gap_grid(frames, std::vector<int>{0});
  EXPECT_DOUBLE_EQ(g.gap[0][0], -2.0);
  EXPECT_DOUBLE_EQ(g.gap[0][1], 0.0);
  double total = 0;
  for (double v : g.gap[0]) total += v;
  EXPECT_DOUBLE_EQ(total, 1.0 - 3.0);  // requests minus fleet
  EXPECT_THROW(gap_grid(frames, std::vector<int>{5}), std::invalid_argument);
}

TEST(Compare, RowsAndMissingRuns) {
  const fs::path base = fs::temp_directory_path() / "dropfleet_compare_test";
  fs::remove_all(base);
  fs::create_directories(base / "run_a");
  fs::create_directories(base / "run_b");
  Metrics m;
  m.arrivals = 10;
  m.served = 9;
  m.rejected = 1;
  m.served_rate_pct = 90;
  m.episodes = 1;
  for (const auto& p : default_periods()) m.periods[p.name] = PeriodMetrics{};
  m.periods["overall"].revenue_per_vehicle_hour = 12.0;
  write_metrics_json(m, (base / "run_a" / "metrics.json").string());
  {
    std::ofstream meta(base / "run_a" / "run.json");
    meta << "{\"model\":\"dqn\"}\n";
  }
  m.periods["overall"].revenue_per_vehicle_hour = 14.0;
  write_metrics_json(m, (base / "run_b" / "metrics.json").string());
  {
    std::ofstream meta(base / "run_b" / "run.json");
    meta << "{\"model\":\"drdqn\"}\n";
  }
  const CompareReport report = compare({(base / "run_a").string(),
                                        (base / "run_b").string(),
                                        (base / "run_c").string()});
  ASSERT_EQ(report.rows.size(), 2u);
  ASSERT_EQ(report.missing.size(), 1u);
  EXPECT_NE(report.markdown.find("**14.0 ± 0.0**"), std::string::npos);
  EXPECT_NE(report.markdown.find("16.7%"), std::string::npos);  // (14-12)/12
  EXPECT_NE(report.csv.find("improvement_vs_dqn_pct"), std::string::npos);

  // Pure function of the artifacts: identical inputs, identical report.
  const CompareReport again = compare({(base / "run_a").string(),
                                       (base / "run_b").string(),
                                       (base / "run_c").string()});
  EXPECT_EQ(report.markdown, again.markdown);
  EXPECT_EQ(report.csv, again.csv);
  fs::remove_all(base);
}

TEST(MetricsJson, RoundTrips) {
  Metrics m;
  m.arrivals = 5;
  m.served = 4;
  m.rejected = 1;
  m.served_rate_pct = 80;
  m.episodes = 2;
  for (const auto& p : default_periods()) m.periods[p.name] = PeriodMetrics{};
  m.periods["peak"].revenue_per_vehicle_hour = 3.25;
  m.periods["peak"].arrivals = 5;
  const fs::path path = fs::temp_directory_path() / "dropfleet_metrics_test.json";
  write_metrics_json(m, path.string());
  const Metrics back = read_metrics_json(path.string());
  EXPECT_EQ(back.arrivals, 5u);
  EXPECT_DOUBLE_EQ(back.periods.at("peak").revenue_per_vehicle_hour, 3.25);
  fs::remove(path);
}

TEST(EventLog, JsonLinesShape) {
  std::vector<sim::Event> events{{3, sim::EventKind::kAssign, 1, 2, 4, 5.0}};
  std::ostringstream out;
  write_event_log(events, out);
  EXPECT_NE(out.str().find("\"kind\":\"assign\""), std::string::npos);
  EXPECT_NE(out.str().find("\"tick\":3"), std::string::npos);
}

TEST(RunConfig, DefaultsParseAndUnknownKeysRejected) {
  const config::RunConfig cfg = config::parse_run_config("{}");
  EXPECT_EQ(cfg.sim.fleet_size, 20);
  EXPECT_EQ(cfg.training.batch_size, 256);
  EXPECT_EQ(cfg.training.option_gen.embed.embed_dim, 8);
  EXPECT_THROW(config::parse_run_config("{\"bogus\": 1}"), std::invalid_argument);
  EXPECT_THROW(config::parse_run_config("{\"grid\": {\"radius\": 3, \"oops\": 1}}"),
               std::invalid_argument);
  EXPECT_THROW(config::parse_run_config("{\"training\": {\"epsilon\": {\"beta\": 1}}}"),
               std::invalid_argument);
  EXPECT_THROW(config::parse_run_config("{\"demand\": {\"mode\": \"psychic\"}}"),
               std::invalid_argument);
}

TEST(RunConfig, SyntheticDemandSourceProducesSpawns) {
  config::RunConfig cfg = config::parse_run_config(R"({
    "grid": {"radius": 3},
    "fleet_size": 4,
    "demand": {"mode": "synthetic", "base_rate": 0.0,
               "hotspots": [{"q": 1, "r": 0, "peak_rate": 2.0, "peak_hour": 0, "width_hours": 50}]}
  })");
  const demand::DemandSource source = config::make_demand_source(cfg);
  Rng rng(9);
  std::size_t total = 0;
  for (int t = 0; t < 100; ++t) total += source.spawns_at(t, rng).size();
  EXPECT_GT(total, 100u);
}

TEST(RunConfig, ReplayModeLoadsCsv) {
  const fs::path path = fs::temp_directory_path() / "dropfleet_trips_test.csv";
  {
    std::ofstream out(path);
    out << "request_time,origin_x,origin_y,dest_x,dest_y\n";
    out << "10,0:0,1:0\n";
    out << "11,9:9,0:0\n";  // clamped
  }
  config::RunConfig cfg = config::parse_run_config(
      "{\"demand\": {\"mode\": \"replay\", \"trips_csv\": \"" + path.string() + "\"}}");
  demand::LoadReport report;
  const demand::DemandSource source = config::make_demand_source(cfg, &report);
  EXPECT_EQ(report.accepted, 2u);
  EXPECT_EQ(report.clamped, 1u);
  Rng rng(1);
  EXPECT_EQ(source.spawns_at(10, rng).size(), 1u);
  fs::remove(path);
}
