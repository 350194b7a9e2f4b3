#include "dropfleet/policy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace dropfleet::policy {

namespace fs = std::filesystem;
using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
  if (name == "dqn") return ModelKind::kDqn;
  if (name == "drdqn") return ModelKind::kDrdqn;
  if (name == "drdqn-0") return ModelKind::kDrdqn0;
  if (name == "drdqn-inf") return ModelKind::kDrdqnInf;
  if (name == "odrdqn") return ModelKind::kOdrdqn;
  if (name == "rdrdqn") return ModelKind::kRdrdqn;
  if (name == "random") return ModelKind::kRandom;
  if (name == "greedy") return ModelKind::kGreedy;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDqn: return "dqn";
    case ModelKind::kDrdqn: return "drdqn";
    case ModelKind::kDrdqn0: return "drdqn-0";
    case ModelKind::kDrdqnInf: return "drdqn-inf";
    case ModelKind::kOdrdqn: return "odrdqn";
    case ModelKind::kRdrdqn: return "rdrdqn";
    case ModelKind::kRandom: return "random";
    case ModelKind::kGreedy: return "greedy";
  }
  return "?";
}

bool is_learned(ModelKind kind) {
  return kind != ModelKind::kRandom && kind != ModelKind::kGreedy;
}

bool uses_options(ModelKind kind) {
  return is_learned(kind) && kind != ModelKind::kDqn;
}

double EpsilonSchedule::at(std::int64_t tick, std::int64_t total_ticks) const {
  const double horizon = decay_fraction * static_cast<double>(total_ticks);
  if (horizon <= 0) return end;
  if (tick >= horizon) return end;
  return start + (end - start) * static_cast<double>(tick) / horizon;
}

int select_option(const nn::DenseNet& qnet, std::span<const double> features,
                  int active_slots, double epsilon, Rng& rng) {
  if (active_slots < 1 || active_slots > qnet.output_size())
    throw std::invalid_argument("select_option: bad active slot count");
  if (epsilon > 0 && rng.uniform01() < epsilon) return rng.uniform_int(active_slots);
  const std::vector<double> q = nn::forward(qnet, features);
  int best = 0;
  for (int i = 1; i < active_slots; ++i)
    if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)]) best = i;
  return best;
}

double smdp_target(const SmdpSample& sample, const nn::DenseNet& target_net,
                   double gamma, int active_slots) {
  const double r =
      sim::discounted_option_reward(sample.total_reward, sample.dt, gamma);
  if (sample.done) return r;
  const std::vector<double> q = nn::forward(target_net, sample.end.features());
  double best = q[0];
  for (int i = 1; i < active_slots; ++i)
    best = std::max(best, q[static_cast<std::size_t>(i)]);
  return r + std::pow(gamma, sample.dt) * best;
}

int max_option_slots(ModelKind kind, const TrainConfig& cfg) {
  if (!uses_options(kind)) return kActionCount;
  if (kind == ModelKind::kOdrdqn)
    return kActionCount + cfg.option_gen.option_count;
  const int generations =
      cfg.option_refresh_episodes > 0
          ? cfg.episodes / cfg.option_refresh_episodes
          : 0;
  return kActionCount + cfg.option_gen.option_count * std::max(1, generations);
}

namespace {

opt::OptionGenConfig gen_config_for(ModelKind kind, const TrainConfig& cfg) {
  opt::OptionGenConfig g = cfg.option_gen;
  switch (kind) {
    case ModelKind::kDrdqn0: g.alpha = 0.0; break;
    case ModelKind::kDrdqnInf: g.alpha = opt::alpha_infinite(); break;
    case ModelKind::kRdrdqn: g.random_embedding = true; break;
    default: break;
  }
  return g;
}

std::vector<opt::LegRecord> leg_records_for(
    const sim::Transition& tr,
    const std::vector<std::shared_ptr<const sim::GlobalFrame>>& frames,
    const CellIndexer& cells, int episode_ticks, int fleet_size) {
  std::vector<opt::LegRecord> records;
  records.reserve(tr.legs.size());
  for (const sim::Leg& leg : tr.legs) {
    opt::LegRecord r;
    r.from.global = frames.at(static_cast<std::size_t>(leg.start_tick));
    r.from.tick = leg.start_tick;
    r.from.episode_ticks = episode_ticks;
    r.from.cell_index = cells.index_of(leg.from);
    r.from.fleet_size = fleet_size;
    r.to.global = frames.at(static_cast<std::size_t>(leg.end_tick));
    r.to.tick = leg.end_tick;
    r.to.episode_ticks = episode_ticks;
    r.to.cell_index = cells.index_of(leg.to);
    r.to.fleet_size = fleet_size;
    r.action = leg.action;
    r.matched = leg.matched_at_end;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<opt::LegRecord> flatten_legs(const ReplayBuffer<RelocSample>& b) {
  std::vector<opt::LegRecord> legs;
  for (const RelocSample& s : b.items())
    legs.insert(legs.end(), s.legs.begin(), s.legs.end());
  return legs;
}

}  // namespace

TrainedPolicy train_high_level(const sim::SimConfig& sim_cfg,
                               const demand::DemandSource& source,
                               ModelKind kind, const TrainConfig& cfg) {
  if (!is_learned(kind))
    throw std::invalid_argument("train_high_level: rule policies are not trained");
  sim_cfg.validate();
  const CellIndexer cells(sim_cfg.grid);
  const int input_dim = sim::Observation::feature_dim(cells.count());
  const int slots = max_option_slots(kind, cfg);

  Rng init_rng(mix_seed(cfg.seed, 0x11417ULL));
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(slots);

  TrainedPolicy out;
  out.kind = kind;
  out.qnet = nn::make_net(sizes, init_rng);
  out.active_slots = kActionCount;
  out.graph = terg::RelocationGraph(cfg.terg_bucket_ticks);

  nn::DenseNet target = nn::hard_copy(out.qnet);
  nn::AdamState adam = nn::AdamState::for_net(out.qnet, cfg.learning_rate);
  ReplayBuffer<SmdpSample> memory(cfg.replay_capacity);
  ReplayBuffer<RelocSample> reloc(cfg.reloc_capacity);
  Rng train_rng(mix_seed(cfg.seed, 0x77A13ULL));
  Rng option_noise(mix_seed(cfg.seed, 0x9015EULL));

  std::vector<nn::DenseNet> option_targets;
  std::vector<nn::AdamState> option_adams;
  std::shared_ptr<laplace::EmbeddingNet> online_phi;  // ODRDQN only
  std::optional<nn::AdamState> online_phi_adam;

  const opt::OptionGenConfig gen_cfg = gen_config_for(kind, cfg);
  const std::int64_t total_ticks =
      static_cast<std::int64_t>(cfg.episodes) * sim_cfg.episode_ticks;
  const std::size_t warmup =
      cfg.warmup_min_samples > 0 ? static_cast<std::size_t>(cfg.warmup_min_samples)
                                 : static_cast<std::size_t>(cfg.batch_size);
  std::int64_t global_tick = 0;

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    sim::World world(sim_cfg, source,
                     mix_seed(cfg.seed, 0xE900ULL + static_cast<std::uint64_t>(episode)));
    Rng explore(mix_seed(cfg.seed, 0xACC7ULL + static_cast<std::uint64_t>(episode)));

    sim::DecideFn decide = [&](int, const sim::Observation& obs)
        -> std::optional<sim::Decision> {
      const double eps = cfg.epsilon.at(global_tick, total_ticks);
      const int slot =
          select_option(out.qnet, obs.features(), out.active_slots, eps, explore);
      if (slot < kActionCount)
        return sim::Decision{slot, action_from_code(slot), 1};
      const opt::DropOption& option = out.options[static_cast<std::size_t>(slot - kActionCount)];
      return sim::Decision{slot, opt::execute_step(option, obs, 0), option.horizon};
    };
    sim::OptionStepFn option_step = [&](int, int slot, const sim::Observation& obs) {
      return opt::execute_step(
          out.options[static_cast<std::size_t>(slot - kActionCount)], obs, 0);
    };

    while (!world.done()) {
      sim::TickResult result = world.tick({}, decide, option_step);
      for (sim::Transition& tr : result.transitions) {
        SmdpSample sample{tr.start, tr.end, tr.option, tr.total_reward(),
                          tr.dt(), tr.done};
        if (tr.is_relocation) {
          out.graph.record_transition(tr);
          RelocSample rs;
          rs.base = sample;
          rs.matched = tr.matched_at_end;
          rs.legs = leg_records_for(tr, world.frames(), cells,
                                    sim_cfg.episode_ticks, sim_cfg.fleet_size);
          reloc.push(std::move(rs));
        }
        memory.push(std::move(sample));
      }

      if (global_tick % cfg.train_every_ticks == 0 && memory.size() >= warmup &&
          memory.size() >= static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<nn::Sample> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        double max_q_sum = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
          const SmdpSample& s = memory.sample(train_rng);
          nn::Sample item;
          item.input = s.start.features();
          const std::vector<double> q = nn::forward(out.qnet, item.input);
          double mq = q[0];
          for (int i = 1; i < out.active_slots; ++i)
            mq = std::max(mq, q[static_cast<std::size_t>(i)]);
          max_q_sum += mq;
          item.target.assign(static_cast<std::size_t>(slots), 0.0);
          item.mask.assign(static_cast<std::size_t>(slots), 0.0);
          item.target[static_cast<std::size_t>(s.option)] =
              smdp_target(s, target, cfg.gamma, out.active_slots);
          item.mask[static_cast<std::size_t>(s.option)] = 1.0;
          batch.push_back(std::move(item));
        }
        double loss = 0;
        nn::Gradients grads = nn::backward_mse(out.qnet, batch, &loss);
        nn::adam_step(out.qnet, grads, adam);
        out.log.push_back({episode, world.clock(), max_q_sum / cfg.batch_size, loss});

        // Per-tick option updates against the newest trip signals.
        if (uses_options(kind) && !out.options.empty() && reloc.size() > 0) {
          const std::size_t first =
              cfg.train_all_options
                  ? 0
                  : out.options.size() -
                        std::min(out.options.size(),
                                 static_cast<std::size_t>(gen_cfg.option_count));
          std::vector<const opt::LegRecord*> leg_batch;
          for (std::size_t oi = first; oi < out.options.size(); ++oi) {
            leg_batch.clear();
            for (int b = 0; b < cfg.option_batch_size; ++b) {
              const RelocSample& rs = reloc.sample(train_rng);
              if (rs.legs.empty()) continue;
              leg_batch.push_back(&rs.legs[static_cast<std::size_t>(
                  train_rng.uniform_int(static_cast<int>(rs.legs.size())))]);
            }
            if (leg_batch.size() < 4) continue;
            opt::train_option_batch(out.options[oi], option_targets[oi],
                                    option_adams[oi], leg_batch, gen_cfg.alpha,
                                    gen_cfg.gamma, option_noise);
          }
        }

        // ODRDQN keeps refining the shared embedding online.
        if (kind == ModelKind::kOdrdqn && online_phi && reloc.size() > 0) {
          laplace::PairDataset data;
          const int pairs = std::min<int>(gen_cfg.embed.batch_size, 32);
          for (int b = 0; b < pairs; ++b) {
            const RelocSample& rs = reloc.sample(train_rng);
            if (rs.legs.empty()) continue;
            const opt::LegRecord& leg = rs.legs[static_cast<std::size_t>(
                train_rng.uniform_int(static_cast<int>(rs.legs.size())))];
            const int a = static_cast<int>(data.states.size());
            data.states.push_back(leg.from.features());
            data.states.push_back(leg.to.features());
            data.connected.emplace_back(a, a + 1);
          }
          if (data.connected.size() >= 4) {
            std::vector<std::pair<int, int>> repulse;
            const int n_states = static_cast<int>(data.states.size());
            for (std::size_t b = 0; b < data.connected.size(); ++b)
              repulse.emplace_back(train_rng.uniform_int(n_states),
                                   train_rng.uniform_int(n_states));
            nn::Gradients grads2;
            laplace::embedding_loss(*online_phi, data.connected, repulse, data,
                                    gen_cfg.embed.lambda, &grads2);
            nn::adam_step(online_phi->net, grads2, *online_phi_adam);
          }
        }
      }

      global_tick += 1;
      if (global_tick % cfg.target_update_ticks == 0) {
        target = nn::hard_copy(out.qnet);
        for (std::size_t oi = 0; oi < out.options.size(); ++oi)
          option_targets[oi] = nn::hard_copy(out.options[oi].qnet);
      }
    }

    out.episode_served_rate.push_back(
        world.arrivals() == 0
            ? 0.0
            : static_cast<double>(world.served()) / static_cast<double>(world.arrivals()));

    // Option-set augmentation.
    const bool expanding = uses_options(kind) && kind != ModelKind::kOdrdqn;
    const bool refresh_due =
        expanding && cfg.option_refresh_episodes > 0 &&
        (episode + 1) % cfg.option_refresh_episodes == 0 &&
        static_cast<int>(out.options.size()) + gen_cfg.option_count <=
            slots - kActionCount;
    const bool odrdqn_due =
        kind == ModelKind::kOdrdqn && out.options.empty();
    if ((refresh_due || odrdqn_due) && reloc.size() > 0) {
      const std::vector<opt::LegRecord> legs = flatten_legs(reloc);
      if (!legs.empty()) {
        // Probe the pre-existing slots so augmentation can be shown to leave
        // them untouched.
        std::vector<double> probe(static_cast<std::size_t>(input_dim), 0.0);
        probe[0] = 1.0;
        const std::vector<double> q_before = nn::forward(out.qnet, probe);
        const int slots_before = out.active_slots;
        std::vector<opt::DropOption> fresh = opt::generate_options(
            legs, input_dim, gen_cfg,
            kActionCount + static_cast<int>(out.options.size()), episode,
            mix_seed(cfg.seed, 0x6E2ULL + static_cast<std::uint64_t>(episode)));
        for (opt::DropOption& option : fresh) {
          option_targets.push_back(nn::hard_copy(option.qnet));
          option_adams.push_back(
              nn::AdamState::for_net(option.qnet, gen_cfg.learning_rate));
          if (kind == ModelKind::kOdrdqn && !online_phi) {
            online_phi = option.embedding;
            online_phi_adam =
                nn::AdamState::for_net(online_phi->net, gen_cfg.embed.learning_rate);
          }
          out.options.push_back(std::move(option));
        }
        out.active_slots = kActionCount + static_cast<int>(out.options.size());
        const std::vector<double> q_after = nn::forward(out.qnet, probe);
        bool identical = true;
        for (int i = 0; i < slots_before; ++i)
          if (q_after[static_cast<std::size_t>(i)] !=
              q_before[static_cast<std::size_t>(i)])
            identical = false;
        out.augmentation_bit_identical.push_back(identical);
      }
    }
  }
  return out;
}

DeciderBundle make_decider(const TrainedPolicy& policy, double epsilon, Rng& rng) {
  DeciderBundle bundle;
  bundle.decide = [&policy, epsilon, &rng](
                      int, const sim::Observation& obs) -> std::optional<sim::Decision> {
    const int slot = select_option(policy.qnet, obs.features(),
                                   policy.active_slots, epsilon, rng);
    if (slot < kActionCount)
      return sim::Decision{slot, action_from_code(slot), 1};
    const opt::DropOption& option =
        policy.options[static_cast<std::size_t>(slot - kActionCount)];
    return sim::Decision{slot, opt::execute_step(option, obs, 0), option.horizon};
  };
  bundle.option_step = [&policy](int, int slot, const sim::Observation& obs) {
    return opt::execute_step(
        policy.options[static_cast<std::size_t>(slot - kActionCount)], obs, 0);
  };
  return bundle;
}

namespace {

sim::Decision random_decision(Rng& rng) {
  const int a = rng.uniform_int(kActionCount);
  return sim::Decision{a, action_from_code(a), 1};
}

bool greedy_should_hold(const sim::Observation& obs) {
  // No relocation while open demand meets or exceeds matchable supply.
  long requests = 0, idle = 0;
  for (int v : obs.global->requests) requests += v;
  for (int v : obs.global->idle) idle += v;
  return requests >= idle && requests > 0;
}

}  // namespace

DeciderBundle make_rule_decider(ModelKind kind, Rng& rng) {
  if (is_learned(kind))
    throw std::invalid_argument("make_rule_decider: expected a rule policy");
  DeciderBundle bundle;
  if (kind == ModelKind::kRandom) {
    bundle.decide = [&rng](int, const sim::Observation&) {
      return std::optional<sim::Decision>(random_decision(rng));
    };
  } else {
    bundle.decide = [&rng](int, const sim::Observation& obs)
        -> std::optional<sim::Decision> {
      if (greedy_should_hold(obs))
        return sim::Decision{0, Action::kStay, 1};
      return random_decision(rng);
    };
  }
  bundle.option_step = nullptr;
  return bundle;
}

std::map<int, sim::Decision> baseline_assignments(ModelKind kind,
                                                  const sim::World& world,
                                                  Rng& rng) {
  std::map<int, sim::Decision> out;
  const std::vector<int> ready = world.decision_ready();
  if (ready.empty()) return out;
  if (kind == ModelKind::kRandom) {
    for (int agent : ready) out[agent] = random_decision(rng);
    return out;
  }
  if (kind == ModelKind::kGreedy) {
    const sim::Observation obs = world.observe(ready.front());
    const bool hold = greedy_should_hold(obs);
    for (int agent : ready)
      out[agent] = hold ? sim::Decision{0, Action::kStay, 1} : random_decision(rng);
    return out;
  }
  throw std::invalid_argument("baseline_assignments: unknown rule kind");
}

void save_policy(const TrainedPolicy& policy, const std::string& dir) {
  fs::create_directories(dir);
  nn::save_net_file(policy.qnet, (fs::path(dir) / "qnet.bin").string());
  json registry;
  registry["model"] = to_string(policy.kind);
  registry["active_slots"] = policy.active_slots;
  registry["options"] = json::array();
  fs::create_directories(fs::path(dir) / "options");
  std::map<const laplace::EmbeddingNet*, std::string> saved_embeddings;
  for (const opt::DropOption& option : policy.options) {
    const std::string qfile = "options/option_" + std::to_string(option.id) + ".bin";
    nn::save_net_file(option.qnet, (fs::path(dir) / qfile).string());
    std::string efile;
    if (option.embedding) {
      auto it = saved_embeddings.find(option.embedding.get());
      if (it == saved_embeddings.end()) {
        efile = "options/embedding_e" + std::to_string(option.created_episode) + ".bin";
        nn::save_net_file(option.embedding->net, (fs::path(dir) / efile).string());
        saved_embeddings.emplace(option.embedding.get(), efile);
      } else {
        efile = it->second;
      }
    }
    registry["options"].push_back({{"id", option.id},
                                   {"kind", option.kind},
                                   {"horizon", option.horizon},
                                   {"created_episode", option.created_episode},
                                   {"random_embedding", option.random_embedding},
                                   {"qnet", qfile},
                                   {"embedding", efile},
                                   {"embed_dim",
                                    option.embedding ? option.embedding->embed_dim : 0}});
  }
  std::ofstream reg(fs::path(dir) / "registry.json");
  reg << registry.dump(2) << '\n';
}

TrainedPolicy load_policy(const std::string& dir) {
  std::ifstream reg(fs::path(dir) / "registry.json");
  if (!reg) throw std::runtime_error("load_policy: missing registry.json in " + dir);
  json registry = json::parse(reg);
  TrainedPolicy policy;
  policy.kind = parse_model_kind(registry.at("model").get<std::string>());
  policy.active_slots = registry.at("active_slots").get<int>();
  policy.qnet = nn::load_net_file((fs::path(dir) / "qnet.bin").string());
  std::map<std::string, std::shared_ptr<laplace::EmbeddingNet>> embeddings;
  for (const json& item : registry.at("options")) {
    opt::DropOption option;
    option.id = item.at("id").get<int>();
    option.kind = item.at("kind").get<int>();
    option.horizon = item.at("horizon").get<int>();
    option.created_episode = item.at("created_episode").get<int>();
    option.random_embedding = item.at("random_embedding").get<bool>();
    option.qnet =
        nn::load_net_file((fs::path(dir) / item.at("qnet").get<std::string>()).string());
    const std::string efile = item.at("embedding").get<std::string>();
    if (!efile.empty()) {
      auto it = embeddings.find(efile);
      if (it == embeddings.end()) {
        auto phi = std::make_shared<laplace::EmbeddingNet>();
        phi->net = nn::load_net_file((fs::path(dir) / efile).string());
        phi->embed_dim = item.at("embed_dim").get<int>();
        it = embeddings.emplace(efile, std::move(phi)).first;
      }
      option.embedding = it->second;
    }
    policy.options.push_back(std::move(option));
  }
  return policy;
}

}  // namespace dropfleet::policy
