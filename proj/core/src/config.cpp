#include "dropfleet/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace dropfleet::config {

using nlohmann::json;

namespace {

/// Enforce that every key of `j` is one of the allowed names.
void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_grid(const json& j, GridSpec& g) {
  check_keys(j, "grid", {"radius", "pitch_m", "speed_m_per_tick"});
  get_if(j, "radius", g.radius);
  get_if(j, "pitch_m", g.pitch_m);
  get_if(j, "speed_m_per_tick", g.speed_m_per_tick);
}

void parse_rewards(const json& j, sim::SimConfig& s) {
  check_keys(j, "rewards", {"beta1", "beta2", "beta3_per_meter"});
  get_if(j, "beta1", s.beta1);
  get_if(j, "beta2", s.beta2);
  get_if(j, "beta3_per_meter", s.beta3_per_meter);
}

void parse_fare(const json& j, sim::FareParams& f) {
  check_keys(j, "fare", {"base", "per_km", "per_tick", "wait_penalty_per_tick"});
  get_if(j, "base", f.base);
  get_if(j, "per_km", f.per_km);
  get_if(j, "per_tick", f.per_tick);
  get_if(j, "wait_penalty_per_tick", f.wait_penalty_per_tick);
}

void parse_demand(const json& j, DemandSpec& d) {
  check_keys(j, "demand",
             {"mode", "trips_csv", "tick_seconds", "projection", "base_rate",
              "hotspots", "dest_weights"});
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "synthetic") d.mode = DemandMode::kSynthetic;
    else if (mode == "replay") d.mode = DemandMode::kReplay;
    else if (mode == "poisson") d.mode = DemandMode::kPoisson;
    else throw std::invalid_argument("config: demand.mode must be synthetic|replay|poisson");
  }
  get_if(j, "trips_csv", d.trips_csv);
  get_if(j, "tick_seconds", d.tick_seconds);
  if (j.contains("projection")) {
    const json& p = j.at("projection");
    check_keys(p, "demand.projection", {"x0", "y0", "scale"});
    get_if(p, "x0", d.projection.x0);
    get_if(p, "y0", d.projection.y0);
    get_if(p, "scale", d.projection.scale);
  }
  get_if(j, "base_rate", d.base_rate);
  if (j.contains("hotspots")) {
    d.hotspots.clear();
    for (const json& h : j.at("hotspots")) {
      check_keys(h, "demand.hotspots[]",
                 {"q", "r", "peak_rate", "peak_hour", "width_hours"});
      demand::Hotspot spot;
      spot.cell = {h.at("q").get<int>(), h.at("r").get<int>()};
      get_if(h, "peak_rate", spot.peak_rate);
      get_if(h, "peak_hour", spot.peak_hour);
      get_if(h, "width_hours", spot.width_hours);
      d.hotspots.push_back(spot);
    }
  }
  if (j.contains("dest_weights") && !j.at("dest_weights").is_null())
    d.dest_weights = j.at("dest_weights").get<std::vector<double>>();
}

void parse_embedding(const json& j, laplace::EmbedConfig& e) {
  check_keys(j, "training.embedding",
             {"dim", "hidden", "lambda", "batch_size", "learning_rate", "steps"});
  get_if(j, "dim", e.embed_dim);
  get_if(j, "hidden", e.hidden);
  get_if(j, "lambda", e.lambda);
  get_if(j, "batch_size", e.batch_size);
  get_if(j, "learning_rate", e.learning_rate);
  get_if(j, "steps", e.steps);
}

void parse_options(const json& j, opt::OptionGenConfig& o) {
  check_keys(j, "training.options",
             {"count", "horizon", "alpha", "warmup_steps", "batch_size",
              "learning_rate", "gamma", "target_refresh", "hidden",
              "embed_pair_cap"});
  get_if(j, "count", o.option_count);
  get_if(j, "horizon", o.horizon);
  get_if(j, "alpha", o.alpha);
  get_if(j, "warmup_steps", o.warmup_steps);
  get_if(j, "batch_size", o.batch_size);
  get_if(j, "learning_rate", o.learning_rate);
  get_if(j, "gamma", o.gamma);
  get_if(j, "target_refresh", o.target_refresh);
  get_if(j, "hidden", o.hidden);
  get_if(j, "embed_pair_cap", o.embed_pair_cap);
}

void parse_training(const json& j, policy::TrainConfig& t) {
  check_keys(j, "training",
             {"episodes", "hidden", "gamma", "learning_rate", "batch_size",
              "replay_capacity", "reloc_capacity", "target_update_ticks",
              "train_every_ticks", "warmup_min_samples", "epsilon",
              "option_refresh_episodes", "option_batch_size",
              "train_all_options", "terg_bucket_ticks", "options", "embedding"});
  get_if(j, "episodes", t.episodes);
  get_if(j, "hidden", t.hidden);
  get_if(j, "gamma", t.gamma);
  get_if(j, "learning_rate", t.learning_rate);
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "replay_capacity", t.replay_capacity);
  get_if(j, "reloc_capacity", t.reloc_capacity);
  get_if(j, "target_update_ticks", t.target_update_ticks);
  get_if(j, "train_every_ticks", t.train_every_ticks);
  get_if(j, "warmup_min_samples", t.warmup_min_samples);
  if (j.contains("epsilon")) {
    const json& e = j.at("epsilon");
    check_keys(e, "training.epsilon", {"start", "end", "decay_fraction"});
    get_if(e, "start", t.epsilon.start);
    get_if(e, "end", t.epsilon.end);
    get_if(e, "decay_fraction", t.epsilon.decay_fraction);
  }
  get_if(j, "option_refresh_episodes", t.option_refresh_episodes);
  get_if(j, "option_batch_size", t.option_batch_size);
  get_if(j, "train_all_options", t.train_all_options);
  get_if(j, "terg_bucket_ticks", t.terg_bucket_ticks);
  if (j.contains("options")) parse_options(j.at("options"), t.option_gen);
  if (j.contains("embedding")) parse_embedding(j.at("embedding"), t.option_gen.embed);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "<root>",
             {"grid", "fleet_size", "episode_ticks", "entry_window_ticks",
              "max_wait_ticks", "max_pickup_eta", "unlimited_pickup_radius",
              "longest_wait_priority", "rewards", "fare", "demand", "model",
              "seed", "training", "evaluation"});
  RunConfig cfg;
  if (j.contains("grid")) parse_grid(j.at("grid"), cfg.sim.grid);
  get_if(j, "fleet_size", cfg.sim.fleet_size);
  get_if(j, "episode_ticks", cfg.sim.episode_ticks);
  get_if(j, "entry_window_ticks", cfg.sim.entry_window_ticks);
  get_if(j, "max_wait_ticks", cfg.sim.max_wait_ticks);
  get_if(j, "max_pickup_eta", cfg.sim.max_pickup_eta);
  get_if(j, "unlimited_pickup_radius", cfg.sim.unlimited_pickup_radius);
  get_if(j, "longest_wait_priority", cfg.sim.longest_wait_priority);
  if (j.contains("rewards")) parse_rewards(j.at("rewards"), cfg.sim);
  if (j.contains("fare")) parse_fare(j.at("fare"), cfg.sim.fare);
  if (j.contains("demand")) parse_demand(j.at("demand"), cfg.demand);
  if (j.contains("model"))
    cfg.model = policy::parse_model_kind(j.at("model").get<std::string>());
  get_if(j, "seed", cfg.seed);
  if (j.contains("training")) parse_training(j.at("training"), cfg.training);
  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    check_keys(e, "evaluation", {"days", "seeds"});
    get_if(e, "days", cfg.evaluation.days);
    get_if(e, "seeds", cfg.evaluation.seeds);
  }
  cfg.training.seed = cfg.seed;
  cfg.sim.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["grid"] = {{"radius", cfg.sim.grid.radius},
               {"pitch_m", cfg.sim.grid.pitch_m},
               {"speed_m_per_tick", cfg.sim.grid.speed_m_per_tick}};
  j["fleet_size"] = cfg.sim.fleet_size;
  j["episode_ticks"] = cfg.sim.episode_ticks;
  j["entry_window_ticks"] = cfg.sim.entry_window_ticks;
  j["max_wait_ticks"] = cfg.sim.max_wait_ticks;
  j["max_pickup_eta"] = cfg.sim.max_pickup_eta;
  j["unlimited_pickup_radius"] = cfg.sim.unlimited_pickup_radius;
  j["longest_wait_priority"] = cfg.sim.longest_wait_priority;
  j["rewards"] = {{"beta1", cfg.sim.beta1},
                  {"beta2", cfg.sim.beta2},
                  {"beta3_per_meter", cfg.sim.beta3_per_meter}};
  j["fare"] = {{"base", cfg.sim.fare.base},
               {"per_km", cfg.sim.fare.per_km},
               {"per_tick", cfg.sim.fare.per_tick},
               {"wait_penalty_per_tick", cfg.sim.fare.wait_penalty_per_tick}};
  j["model"] = policy::to_string(cfg.model);
  j["seed"] = cfg.seed;
  return j.dump(2);
}

demand::DemandSource make_demand_source(const RunConfig& cfg,
                                        demand::LoadReport* report) {
  const CellIndexer cells(cfg.sim.grid);
  switch (cfg.demand.mode) {
    case DemandMode::kSynthetic: {
      const std::vector<double>* weights =
          cfg.demand.dest_weights ? &*cfg.demand.dest_weights : nullptr;
      demand::DemandProfile profile = demand::synth_scenario(
          cfg.demand.hotspots, cfg.demand.base_rate, cells, 24,
          std::max(1, cfg.sim.episode_ticks / 24), weights);
      return demand::DemandSource::poisson(std::move(profile), cfg.sim.grid);
    }
    case DemandMode::kReplay: {
      auto trips = demand::load_trips_file(cfg.demand.trips_csv, cfg.sim.grid,
                                           cfg.demand.projection,
                                           cfg.sim.episode_ticks,
                                           cfg.demand.tick_seconds, report);
      return demand::DemandSource::replay(std::move(trips));
    }
    case DemandMode::kPoisson: {
      auto trips = demand::load_trips_file(cfg.demand.trips_csv, cfg.sim.grid,
                                           cfg.demand.projection,
                                           cfg.sim.episode_ticks,
                                           cfg.demand.tick_seconds, report);
      demand::DemandProfile profile = demand::build_profile(
          trips, cells, std::max(1, cfg.sim.episode_ticks / 24),
          cfg.sim.episode_ticks);
      return demand::DemandSource::poisson(std::move(profile), cfg.sim.grid);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace dropfleet::config
