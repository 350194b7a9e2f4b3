#include "dropfleet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dropfleet::harness {

using nlohmann::json;

bool Period::contains_hour(int hour) const {
  for (const auto& [lo, hi] : hour_ranges)
    if (hour >= lo && hour < hi) return true;
  return false;
}

int Period::hours() const {
  int total = 0;
  for (const auto& [lo, hi] : hour_ranges) total += hi - lo;
  return total;
}

std::vector<Period> default_periods() {
  return {
      {"peak", {{8, 10}, {18, 20}}},
      {"offpeak", {{10, 14}}},
      {"night", {{3, 5}}},
      {"overall", {{0, 24}}},
  };
}

EpisodeStats episode_stats(const sim::World& world, int ticks_per_hour) {
  EpisodeStats s;
  s.reward_by_tick = world.reward_by_tick();
  s.fleet_size = world.config().fleet_size;
  s.ticks_per_hour = ticks_per_hour;
  s.request_outcomes.reserve(world.requests().size());
  for (const sim::Request& r : world.requests())
    s.request_outcomes.emplace_back(r.request_tick, r.status);
  return s;
}

Metrics aggregate_metrics(std::span<const EpisodeStats> episodes,
                          const std::vector<Period>& periods) {
  Metrics m;
  m.episodes = static_cast<int>(episodes.size());
  for (const Period& p : periods) m.periods[p.name] = PeriodMetrics{};

  std::map<std::string, std::vector<double>> revenue_samples;
  for (const EpisodeStats& ep : episodes) {
    for (const Period& p : periods) {
      double reward = 0;
      for (std::size_t t = 0; t < ep.reward_by_tick.size(); ++t) {
        const int hour = static_cast<int>(t) / ep.ticks_per_hour;
        if (p.contains_hour(hour % 24)) reward += ep.reward_by_tick[t];
      }
      const double vehicle_hours =
          static_cast<double>(std::max(1, ep.fleet_size)) * p.hours();
      revenue_samples[p.name].push_back(reward / vehicle_hours);
      auto& pm = m.periods[p.name];
      for (const auto& [tick, status] : ep.request_outcomes) {
        const int hour = (tick / ep.ticks_per_hour) % 24;
        if (!p.contains_hour(hour)) continue;
        pm.arrivals += 1;
        if (status == sim::RequestStatus::kRejected) pm.rejection_rate_pct += 1;
        if (status == sim::RequestStatus::kCompleted) pm.served_rate_pct += 1;
      }
    }
    for (const auto& [tick, status] : ep.request_outcomes) {
      (void)tick;
      m.arrivals += 1;
      if (status == sim::RequestStatus::kCompleted) m.served += 1;
      else if (status == sim::RequestStatus::kRejected) m.rejected += 1;
      else m.pending += 1;
    }
  }
  for (auto& [name, pm] : m.periods) {
    const auto& samples = revenue_samples[name];
    double mean = 0;
    for (double x : samples) mean += x;
    if (!samples.empty()) mean /= static_cast<double>(samples.size());
    double var = 0;
    for (double x : samples) var += (x - mean) * (x - mean);
    if (samples.size() > 1) var /= static_cast<double>(samples.size() - 1);
    pm.revenue_per_vehicle_hour = mean;
    pm.revenue_std = std::sqrt(var);
    if (pm.arrivals == 0) {
      pm.no_demand = true;
      pm.rejection_rate_pct = 0;
      pm.served_rate_pct = 0;
    } else {
      pm.rejection_rate_pct *= 100.0 / static_cast<double>(pm.arrivals);
      pm.served_rate_pct *= 100.0 / static_cast<double>(pm.arrivals);
    }
  }
  m.served_rate_pct =
      m.arrivals == 0 ? 0.0 : 100.0 * static_cast<double>(m.served) /
                                  static_cast<double>(m.arrivals);
  return m;
}

Metrics evaluate(const policy::TrainedPolicy* policy, policy::ModelKind kind,
                 const sim::SimConfig& sim_cfg,
                 const demand::DemandSource& source, int days,
                 std::span<const std::uint64_t> seeds,
                 std::vector<EpisodeStats>* episodes_out) {
  if (days < 1) throw std::invalid_argument("evaluate: days must be >= 1");
  std::vector<EpisodeStats> episodes;
  for (const std::uint64_t seed : seeds) {
    for (int day = 0; day < days; ++day) {
      sim::World world(sim_cfg, source,
                       mix_seed(seed, 0xDA7ULL + static_cast<std::uint64_t>(day)));
      Rng rng(mix_seed(seed, 0x9E0ULL + static_cast<std::uint64_t>(day)));
      policy::DeciderBundle bundle =
          policy ? policy::make_decider(*policy, 0.0, rng)
                 : policy::make_rule_decider(kind, rng);
      while (!world.done()) world.tick({}, bundle.decide, bundle.option_step);
      episodes.push_back(episode_stats(world));
    }
  }
  Metrics m = aggregate_metrics(episodes, default_periods());
  if (episodes_out) *episodes_out = std::move(episodes);
  return m;
}

std::vector<double> dithering_curve(
    const std::function<Action(HexCoord, Rng&)>& chooser, const GridSpec& grid,
    HexCoord origin, int max_ring, int trials, Rng& rng) {
  if (max_ring < 1 || trials < 1)
    throw std::invalid_argument("dithering_curve: bad parameters");
  if (grid.radius < max_ring)
    throw std::invalid_argument("dithering_curve: grid smaller than max ring");
  std::vector<long> hits(static_cast<std::size_t>(max_ring), 0);
  for (int trial = 0; trial < trials; ++trial) {
    HexCoord pos = origin;
    int best_ring = 0;
    for (int step = 1; step <= max_ring; ++step) {
      pos = apply_action(pos, chooser(pos, rng), grid);
      best_ring = std::max(best_ring, ring_index(origin, pos));
      // Ring n is reachable only by step n, so one pass covers every n.
      if (best_ring >= step) hits[static_cast<std::size_t>(step - 1)] += 1;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(max_ring));
  for (int n = 0; n < max_ring; ++n)
    out[static_cast<std::size_t>(n)] =
        static_cast<double>(hits[static_cast<std::size_t>(n)]) / trials;
  return out;
}

std::function<Action(HexCoord, Rng&)> uniform_walk() {
  return [](HexCoord, Rng& rng) {
    return action_from_code(rng.uniform_int(kActionCount));
  };
}

GapGrid gap_grid(const std::vector<std::shared_ptr<const sim::GlobalFrame>>& frames,
                 std::span<const int> ticks) {
  GapGrid g;
  for (int t : ticks) {
    if (t < 0 || t >= static_cast<int>(frames.size()))
      throw std::invalid_argument("gap_grid: tick outside recorded range");
    const sim::GlobalFrame& frame = *frames[static_cast<std::size_t>(t)];
    std::vector<double> gap(frame.idle.size());
    for (std::size_t c = 0; c < gap.size(); ++c)
      gap[c] = static_cast<double>(frame.requests[c]) -
               static_cast<double>(frame.idle[c] + frame.busy[c]);
    g.ticks.push_back(t);
    g.gap.push_back(std::move(gap));
  }
  return g;
}

void dump_gap_csv(const GapGrid& g, const CellIndexer& cells, std::ostream& out) {
  out << "tick,cell_q,cell_r,gap\n";
  for (std::size_t i = 0; i < g.ticks.size(); ++i)
    for (int c = 0; c < cells.count(); ++c)
      out << g.ticks[i] << ',' << cells.at(c).q << ',' << cells.at(c).r << ','
          << g.gap[i][static_cast<std::size_t>(c)] << '\n';
}

namespace {

json metrics_to_json(const Metrics& m) {
  json j;
  j["arrivals"] = m.arrivals;
  j["served"] = m.served;
  j["rejected"] = m.rejected;
  j["pending"] = m.pending;
  j["served_rate_pct"] = m.served_rate_pct;
  j["episodes"] = m.episodes;
  j["periods"] = json::object();
  for (const auto& [name, pm] : m.periods) {
    j["periods"][name] = {
        {"revenue_per_vehicle_hour", pm.revenue_per_vehicle_hour},
        {"revenue_std", pm.revenue_std},
        {"rejection_rate_pct", pm.rejection_rate_pct},
        {"served_rate_pct", pm.served_rate_pct},
        {"arrivals", pm.arrivals},
        {"no_demand", pm.no_demand},
    };
  }
  return j;
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.arrivals = j.at("arrivals").get<std::size_t>();
  m.served = j.at("served").get<std::size_t>();
  m.rejected = j.at("rejected").get<std::size_t>();
  m.pending = j.at("pending").get<std::size_t>();
  m.served_rate_pct = j.at("served_rate_pct").get<double>();
  m.episodes = j.at("episodes").get<int>();
  for (const auto& [name, pj] : j.at("periods").items()) {
    PeriodMetrics pm;
    pm.revenue_per_vehicle_hour = pj.at("revenue_per_vehicle_hour").get<double>();
    pm.revenue_std = pj.at("revenue_std").get<double>();
    pm.rejection_rate_pct = pj.at("rejection_rate_pct").get<double>();
    pm.served_rate_pct = pj.at("served_rate_pct").get<double>();
    pm.arrivals = pj.at("arrivals").get<std::size_t>();
    pm.no_demand = pj.at("no_demand").get<bool>();
    m.periods[name] = pm;
  }
  return m;
}

std::string round1(double x) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << x;
  return os.str();
}

}  // namespace

void write_metrics_json(const Metrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << metrics_to_json(m).dump(2) << '\n';
}

Metrics read_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return metrics_from_json(json::parse(in));
}

CompareReport compare(const std::vector<std::string>& run_dirs) {
  CompareReport report;
  for (const std::string& dir : run_dirs) {
    const std::string path = dir + "/metrics.json";
    std::ifstream probe(path);
    if (!probe) {
      report.missing.push_back(dir);
      continue;
    }
    RunRow row;
    row.metrics = read_metrics_json(path);
    // Model name from the run's config echo when present, else the dir name.
    std::ifstream meta(dir + "/run.json");
    if (meta) {
      json j = json::parse(meta);
      row.model = j.value("model", dir);
    } else {
      row.model = dir;
    }
    report.rows.push_back(std::move(row));
  }

  const std::vector<std::string> period_names = {"peak", "offpeak", "night",
                                                 "overall"};
  // Column winners: highest revenue, lowest rejection.
  std::map<std::string, double> best_rev, best_rej;
  for (const std::string& p : period_names) {
    for (const RunRow& row : report.rows) {
      const auto& pm = row.metrics.periods.at(p);
      if (!best_rev.count(p) || pm.revenue_per_vehicle_hour > best_rev[p])
        best_rev[p] = pm.revenue_per_vehicle_hour;
      if (!best_rej.count(p) || pm.rejection_rate_pct < best_rej[p])
        best_rej[p] = pm.rejection_rate_pct;
    }
  }
  const RunRow* dqn_row = nullptr;
  for (const RunRow& row : report.rows)
    if (row.model == "dqn") dqn_row = &row;

  std::ostringstream md, csv;
  md << "| Model |";
  csv << "model";
  for (const std::string& p : period_names) {
    md << " revenue " << p << " | reject% " << p << " |";
    csv << ",revenue_" << p << ",revenue_std_" << p << ",reject_pct_" << p;
  }
  md << " served% | vs dqn |\n|---|";
  csv << ",served_pct,improvement_vs_dqn_pct\n";
  for (std::size_t i = 0; i < period_names.size() * 2 + 2; ++i) md << "---|";
  md << '\n';
  for (const RunRow& row : report.rows) {
    md << "| " << row.model << " |";
    csv << row.model;
    for (const std::string& p : period_names) {
      const auto& pm = row.metrics.periods.at(p);
      const std::string rev =
          round1(pm.revenue_per_vehicle_hour) + " ± " + round1(pm.revenue_std);
      const std::string rej = round1(pm.rejection_rate_pct);
      md << ' '
         << (pm.revenue_per_vehicle_hour == best_rev[p] ? "**" + rev + "**" : rev)
         << " |"
         << ' ' << (pm.rejection_rate_pct == best_rej[p] ? "**" + rej + "**" : rej)
         << " |";
      csv << ',' << pm.revenue_per_vehicle_hour << ',' << pm.revenue_std << ','
          << pm.rejection_rate_pct;
    }
    md << ' ' << round1(row.metrics.served_rate_pct) << " |";
    csv << ',' << row.metrics.served_rate_pct << ',';
    if (dqn_row && dqn_row != &row) {
      const double base =
          dqn_row->metrics.periods.at("overall").revenue_per_vehicle_hour;
      const double mine = row.metrics.periods.at("overall").revenue_per_vehicle_hour;
      if (base != 0) {
        const double pct = 100.0 * (mine - base) / std::abs(base);
        md << ' ' << round1(pct) << "% |";
        csv << pct;
      } else {
        md << " n/a |";
      }
    } else {
      md << " — |";
    }
    md << '\n';
    csv << '\n';
  }
  for (const std::string& dir : report.missing)
    md << "\nmissing run: " << dir << '\n';
  report.markdown = md.str();
  report.csv = csv.str();
  return report;
}

void write_event_log(std::span<const sim::Event> events, std::ostream& out) {
  for (const sim::Event& e : events) {
    json j = {{"tick", e.tick},   {"kind", sim::to_string(e.kind)},
              {"agent", e.agent}, {"request", e.request},
              {"cell", e.cell},   {"value", e.value}};
    out << j.dump() << '\n';
  }
}

void write_training_log_csv(std::span<const policy::TrainLogRow> log,
                            std::ostream& out, int moving_average_window) {
  out << "episode,tick,max_q,max_q_ma,loss\n";
  double running = 0;
  std::deque<double> window;
  for (const policy::TrainLogRow& row : log) {
    window.push_back(row.max_q);
    running += row.max_q;
    if (static_cast<int>(window.size()) > moving_average_window) {
      running -= window.front();
      window.pop_front();
    }
    out << row.episode << ',' << row.tick << ',' << row.max_q << ','
        << running / static_cast<double>(window.size()) << ',' << row.loss << '\n';
  }
}

}  // namespace dropfleet::harness
