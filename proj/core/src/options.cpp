#include "dropfleet/options.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dropfleet::opt {

double alpha_infinite() { return std::numeric_limits<double>::infinity(); }

double pseudo_reward(int kind, std::span<const double> f_s,
                     std::span<const double> f_s2, bool indicator,
                     double alpha) {
  if (kind < 1 || kind > 3) throw std::invalid_argument("pseudo_reward: kind in 1..3");
  if (!(alpha >= 0)) throw std::invalid_argument("pseudo_reward: alpha must be >= 0");
  if (f_s.size() != f_s2.size())
    throw std::invalid_argument("pseudo_reward: embedding length mismatch");
  if (std::isinf(alpha)) return indicator ? 1.0 : 0.0;
  auto norm = [](std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  double base = 0;
  switch (kind) {
    case 1: base = norm(f_s) - norm(f_s2); break;
    case 2: base = norm(f_s2) - norm(f_s); break;
    default: {
      double s = 0;
      for (std::size_t i = 0; i < f_s.size(); ++i) {
        const double d = f_s[i] - f_s2[i];
        s += d * d;
      }
      base = std::sqrt(s);
      break;
    }
  }
  return base + alpha * (indicator ? 1.0 : 0.0);
}

Action greedy_action(const nn::DenseNet& qnet, std::span<const double> features) {
  const std::vector<double> q = nn::forward(qnet, features);
  if (q.size() != static_cast<std::size_t>(kActionCount))
    throw std::invalid_argument("greedy_action: net must have 7 outputs");
  int best = 0;
  for (int a = 1; a < kActionCount; ++a)
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  return action_from_code(best);
}

Action execute_step(const DropOption& option, const sim::Observation& obs,
                    int steps_executed) {
  if (steps_executed >= option.horizon)
    throw std::logic_error("execute_step: option horizon spent");
  return greedy_action(option.qnet, obs.features());
}

namespace {

std::vector<double> embed_values(const DropOption& option,
                                 std::span<const double> features, Rng& noise) {
  if (option.random_embedding) {
    std::vector<double> f(static_cast<std::size_t>(option.embedding->embed_dim));
    for (double& x : f) x = noise.uniform01();
    return f;
  }
  return option.embedding->embed(features);
}

}  // namespace

double train_option_batch(DropOption& option, const nn::DenseNet& target,
                          nn::AdamState& adam,
                          std::span<const LegRecord* const> batch, double alpha,
                          double gamma, Rng& noise) {
  std::vector<nn::Sample> samples;
  samples.reserve(batch.size());
  for (const LegRecord* leg : batch) {
    nn::Sample s;
    s.input = leg->from.features();
    const std::vector<double> next = leg->to.features();
    const std::vector<double> f_s = embed_values(option, s.input, noise);
    const std::vector<double> f_s2 = embed_values(option, next, noise);
    const double r = pseudo_reward(option.kind, f_s, f_s2, leg->matched, alpha);
    double td = r;
    if (!leg->matched) {
      const std::vector<double> q_next = nn::forward(target, next);
      td += gamma * *std::max_element(q_next.begin(), q_next.end());
    }
    s.target.assign(static_cast<std::size_t>(kActionCount), 0.0);
    s.mask.assign(static_cast<std::size_t>(kActionCount), 0.0);
    const auto a = static_cast<std::size_t>(leg->action);
    s.target[a] = td;
    s.mask[a] = 1.0;
    samples.push_back(std::move(s));
  }
  double loss = 0;
  nn::Gradients grads = nn::backward_mse(option.qnet, samples, &loss);
  nn::adam_step(option.qnet, grads, adam);
  return loss;
}

std::vector<DropOption> generate_options(std::span<const LegRecord> legs,
                                         int input_dim,
                                         const OptionGenConfig& cfg,
                                         int first_id, int episode,
                                         std::uint64_t seed) {
  if (cfg.option_count == 0) return {};
  if (cfg.option_count < 0 || cfg.option_count > 3)
    throw std::invalid_argument("generate_options: option_count in 0..3");
  if (legs.empty()) throw std::invalid_argument("generate_options: no relocation data");

  Rng rng(mix_seed(seed, 0x0D707ULL + static_cast<std::uint64_t>(episode)));

  // Embedding snapshot: subsample legs and materialize their endpoint
  // features once.
  laplace::PairDataset data;
  const int n_pairs = std::min<int>(cfg.embed_pair_cap, static_cast<int>(legs.size()));
  data.states.reserve(static_cast<std::size_t>(n_pairs) * 2);
  data.connected.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    const LegRecord& leg =
        legs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(legs.size())))];
    const int a = static_cast<int>(data.states.size());
    data.states.push_back(leg.from.features());
    data.states.push_back(leg.to.features());
    data.connected.emplace_back(a, a + 1);
  }
  laplace::EmbedConfig embed_cfg = cfg.embed;
  embed_cfg.seed = mix_seed(seed, 0xE1BEDULL + static_cast<std::uint64_t>(episode));
  embed_cfg.batch_size = std::min(embed_cfg.batch_size, n_pairs);
  auto phi = std::make_shared<laplace::EmbeddingNet>(
      laplace::train_embedding(data, input_dim, embed_cfg).phi);

  std::vector<DropOption> options;
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(kActionCount);
  for (int k = 1; k <= cfg.option_count; ++k) {
    DropOption option;
    option.id = first_id + (k - 1);
    option.kind = k;
    option.horizon = cfg.horizon;
    option.created_episode = episode;
    option.embedding = phi;
    option.random_embedding = cfg.random_embedding;
    Rng net_rng = rng.split(static_cast<std::uint64_t>(k));
    option.qnet = nn::make_net(sizes, net_rng);
    nn::DenseNet target = nn::hard_copy(option.qnet);
    nn::AdamState adam = nn::AdamState::for_net(option.qnet, cfg.learning_rate);
    Rng noise = rng.split(0xFA4EULL + static_cast<std::uint64_t>(k));
    const int batch_size =
        std::min<int>(cfg.batch_size, static_cast<int>(legs.size()));
    std::vector<const LegRecord*> batch(static_cast<std::size_t>(batch_size));
    for (int step = 0; step < cfg.warmup_steps; ++step) {
      for (auto& slot : batch)
        slot = &legs[static_cast<std::size_t>(
            net_rng.uniform_int(static_cast<int>(legs.size())))];
      train_option_batch(option, target, adam, batch, cfg.alpha, cfg.gamma, noise);
      if ((step + 1) % cfg.target_refresh == 0)
        target = nn::hard_copy(option.qnet);
    }
    options.push_back(std::move(option));
  }
  return options;
}

}  // namespace dropfleet::opt
