#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dropfleet/laplace.hpp"
#include "dropfleet/nn.hpp"
#include "dropfleet/sim.hpp"

namespace dropfleet::opt {

/// Sentinel for the trip-signal-only reward mode.
double alpha_infinite();

/// The three relocation pseudo-rewards over a state embedding plus the trip
/// indicator: kind 1 descends the embedding norm, kind 2 climbs it, kind 3
/// rewards large embedding displacement. With alpha infinite the reward is
/// the indicator alone.
double pseudo_reward(int kind, std::span<const double> f_s,
                     std::span<const double> f_s2, bool indicator,
                     double alpha);

/// One temporally extended relocation option: a frozen embedding, a 7-way
/// action-value net, and a fixed step horizon.
struct DropOption {
  int id = 0;
  int kind = 1;
  int horizon = 5;
  int created_episode = 0;
  std::shared_ptr<laplace::EmbeddingNet> embedding;  // shared within a batch
  nn::DenseNet qnet;
  bool random_embedding = false;  // substitute U(0,1) values for the embedding
};

/// Greedy primitive action of a 7-output value net; ties break toward the
/// lowest action code.
Action greedy_action(const nn::DenseNet& qnet, std::span<const double> features);

/// Next primitive action of an active option. Throws once the fixed horizon
/// is spent.
Action execute_step(const DropOption& option, const sim::Observation& obs,
                    int steps_executed = 0);

/// One relocation step with its endpoint observations, as stored in the
/// relocation replay buffer.
struct LegRecord {
  sim::Observation from;
  sim::Observation to;
  Action action = Action::kStay;
  bool matched = false;
};

struct OptionGenConfig {
  int option_count = 3;  // one option per pseudo-reward kind
  int horizon = 5;
  double alpha = 1.0;
  int warmup_steps = 2000;
  int batch_size = 128;
  double learning_rate = 0.001;
  double gamma = 0.9;
  int target_refresh = 100;
  std::vector<int> hidden = {128};
  laplace::EmbedConfig embed;
  int embed_pair_cap = 4000;      // subsample bound for embedding training
  bool random_embedding = false;  // replace embedding values with U(0,1)
};

/// One value-iteration step of an option net on a batch of relabeled
/// relocation steps (one-step targets, matched steps terminal).
double train_option_batch(DropOption& option, const nn::DenseNet& target,
                          nn::AdamState& adam,
                          std::span<const LegRecord* const> batch, double alpha,
                          double gamma, Rng& noise);

/// Train a frozen embedding on the relocation snapshot, then one option per
/// pseudo-reward kind against it. Deterministic given the seed.
std::vector<DropOption> generate_options(std::span<const LegRecord> legs,
                                         int input_dim,
                                         const OptionGenConfig& cfg,
                                         int first_id, int episode,
                                         std::uint64_t seed);

}  // namespace dropfleet::opt
