#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dropfleet/demand.hpp"
#include "dropfleet/nn.hpp"
#include "dropfleet/options.hpp"
#include "dropfleet/sim.hpp"
#include "dropfleet/terg.hpp"

namespace dropfleet::policy {

enum class ModelKind {
  kDqn,
  kDrdqn,
  kDrdqn0,
  kDrdqnInf,
  kOdrdqn,
  kRdrdqn,
  kRandom,
  kGreedy,
};

ModelKind parse_model_kind(const std::string& name);
const char* to_string(ModelKind kind);
bool is_learned(ModelKind kind);
bool uses_options(ModelKind kind);

/// FIFO ring buffer with uniform sampling.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    items_.push_back(std::move(item));
    if (items_.size() > capacity_) items_.pop_front();
  }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& sample(Rng& rng) const {
    return items_[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(items_.size())))];
  }
  const std::deque<T>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

/// High-level experience: one serving or relocating cycle.
struct SmdpSample {
  sim::Observation start;
  sim::Observation end;
  int option = 0;
  double total_reward = 0;
  int dt = 1;
  bool done = false;
};

/// Relocation experience kept for option and embedding training.
struct RelocSample {
  SmdpSample base;
  bool matched = false;
  std::vector<opt::LegRecord> legs;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double decay_fraction = 0.5;  // of total training ticks

  double at(std::int64_t tick, std::int64_t total_ticks) const;
};

struct TrainConfig {
  int episodes = 10;
  std::vector<int> hidden = {128};
  double gamma = 0.99;
  double learning_rate = 0.001;
  int batch_size = 256;
  std::size_t replay_capacity = 100000;
  std::size_t reloc_capacity = 30000;
  int target_update_ticks = 100;
  int train_every_ticks = 1;
  int warmup_min_samples = 0;  // 0: one batch
  EpsilonSchedule epsilon;
  int option_refresh_episodes = 2;  // p
  int option_batch_size = 128;
  bool train_all_options = true;  // false: only the latest generation
  opt::OptionGenConfig option_gen;
  int terg_bucket_ticks = 60;
  std::uint64_t seed = 1;
};

/// Epsilon-greedy choice over the first `active_slots` outputs; greedy ties
/// break toward the lowest slot.
int select_option(const nn::DenseNet& qnet, std::span<const double> features,
                  int active_slots, double epsilon, Rng& rng);

/// Bellman target for one option-level sample:
///   r(s,o) + gamma^dt * max over active slots of the target net at s'.
/// Terminal samples drop the bootstrap.
double smdp_target(const SmdpSample& sample, const nn::DenseNet& target_net,
                   double gamma, int active_slots);

struct TrainLogRow {
  int episode = 0;
  int tick = 0;
  double max_q = 0;
  double loss = 0;
};

struct TrainedPolicy {
  ModelKind kind = ModelKind::kDqn;
  nn::DenseNet qnet;  // pre-sized to the maximum slot count
  int active_slots = kActionCount;
  std::vector<opt::DropOption> options;
  std::vector<TrainLogRow> log;
  std::vector<double> episode_served_rate;
  /// One entry per option augmentation: whether every pre-existing slot's
  /// Q output was bit-identical right after the new slots were activated.
  std::vector<bool> augmentation_bit_identical;
  terg::RelocationGraph graph{60};
};

/// Total Q-head width for a run: the 7 primitive slots plus every option
/// slot the schedule can ever activate. Masking handles growth, so the net
/// never changes shape.
int max_option_slots(ModelKind kind, const TrainConfig& cfg);

/// The full training loop: run episodes, record experience, per-tick updates
/// of the high-level net and each active option, periodic target refreshes
/// and option-set augmentation.
TrainedPolicy train_high_level(const sim::SimConfig& sim_cfg,
                               const demand::DemandSource& source,
                               ModelKind kind, const TrainConfig& cfg);

/// Per-tick decision callbacks for a frozen policy (epsilon 0 unless given).
struct DeciderBundle {
  sim::DecideFn decide;
  sim::OptionStepFn option_step;
};

DeciderBundle make_decider(const TrainedPolicy& policy, double epsilon,
                           Rng& rng);
DeciderBundle make_rule_decider(ModelKind kind, Rng& rng);

/// Rule-policy assignments for every decision-ready vehicle of a world, in
/// the shape the simulator's assignment map expects.
std::map<int, sim::Decision> baseline_assignments(ModelKind kind,
                                                  const sim::World& world,
                                                  Rng& rng);

void save_policy(const TrainedPolicy& policy, const std::string& dir);
TrainedPolicy load_policy(const std::string& dir);

}  // namespace dropfleet::policy
