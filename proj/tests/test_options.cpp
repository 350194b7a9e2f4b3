#include "dropfleet/options.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace dropfleet;
using namespace dropfleet::opt;

namespace {

const GridSpec kToyGrid{2, 600.0, 600.0};  // 19 cells, diameter 5

std::shared_ptr<const sim::GlobalFrame> zero_frame(int cells) {
  auto f = std::make_shared<sim::GlobalFrame>();
  f->idle.assign(static_cast<std::size_t>(cells), 0);
  f->requests.assign(static_cast<std::size_t>(cells), 0);
  f->busy.assign(static_cast<std::size_t>(cells), 0);
  return f;
}

sim::Observation obs_at(int cell_index, int cells,
                        const std::shared_ptr<const sim::GlobalFrame>& frame) {
  sim::Observation o;
  o.global = frame;
  o.tick = 0;
  o.episode_ticks = 100;
  o.cell_index = cell_index;
  o.fleet_size = 1;
  return o;
}

// Embedding-as-table: a linear net reading the one-hot block of the
// observation features, emitting per-cell coordinates.
laplace::EmbeddingNet table_embedding(const CellIndexer& cells,
                                      const std::vector<std::vector<double>>& f) {
  const int h = cells.count();
  const int dim = static_cast<int>(f.front().size());
  laplace::EmbeddingNet net;
  net.embed_dim = dim;
  net.net = nn::make_zero_net(std::vector<int>{sim::Observation::feature_dim(h), dim + 1});
  const int onehot_base = 3 * h + 1;
  for (int c = 0; c < h; ++c)
    for (int k = 0; k < dim; ++k)
      net.net.layers[0].weights.at(k + 1, onehot_base + c) =
          f[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
  return net;
}

// Tabular one-step value iteration over the toy grid with a pseudo-reward.
struct ToyQ {
  std::vector<std::array<double, kActionCount>> q;

  static ToyQ solve(const CellIndexer& cells, const GridSpec& grid,
                    const std::vector<std::vector<double>>& f, int kind,
                    double alpha, double gamma) {
    ToyQ out;
    out.q.assign(static_cast<std::size_t>(cells.count()), {});
    for (int iter = 0; iter < 2000; ++iter) {
      double residual = 0;
      auto next = out.q;
      for (int c = 0; c < cells.count(); ++c) {
        for (int a = 0; a < kActionCount; ++a) {
          const HexCoord to = apply_action(cells.at(c), action_from_code(a), grid);
          const int tc = cells.index_of(to);
          const double r =
              pseudo_reward(kind, f[static_cast<std::size_t>(c)],
                            f[static_cast<std::size_t>(tc)], false, alpha);
          double best = out.q[static_cast<std::size_t>(tc)][0];
          for (int a2 = 1; a2 < kActionCount; ++a2)
            best = std::max(best, out.q[static_cast<std::size_t>(tc)][static_cast<std::size_t>(a2)]);
          const double v = r + gamma * best;
          residual = std::max(residual, std::abs(v - out.q[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)]));
          next[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)] = v;
        }
      }
      out.q = std::move(next);
      if (residual < 1e-10) break;
    }
    return out;
  }

  int greedy(int cell) const {
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
      if (q[static_cast<std::size_t>(cell)][static_cast<std::size_t>(a)] >
          q[static_cast<std::size_t>(cell)][static_cast<std::size_t>(best)])
        best = a;
    return best;
  }
};

std::vector<std::vector<double>> distance_field(const CellIndexer& cells,
                                                HexCoord sink, double scale) {
  std::vector<std::vector<double>> f;
  for (int c = 0; c < cells.count(); ++c)
    f.push_back({scale * hex_distance(cells.at(c), sink), 0.0});
  return f;
}

}  // namespace

TEST(PseudoReward, KnownValues) {
  EXPECT_DOUBLE_EQ(pseudo_reward(1, std::vector<double>{2.0}, std::vector<double>{0.5}, true, 1.0), 2.5);
  EXPECT_DOUBLE_EQ(pseudo_reward(3, std::vector<double>{1, 2}, std::vector<double>{1, 2}, false, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(pseudo_reward(3, std::vector<double>{1, 0}, std::vector<double>{0, 1}, false, 0.0),
                   std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(pseudo_reward(2, std::vector<double>{2.0}, std::vector<double>{0.5}, false, 1.0), -1.5);
  EXPECT_THROW(pseudo_reward(0, std::vector<double>{1}, std::vector<double>{1}, false, 1.0),
               std::invalid_argument);
  EXPECT_THROW(pseudo_reward(4, std::vector<double>{1}, std::vector<double>{1}, false, 1.0),
               std::invalid_argument);
}

TEST(PseudoReward, InfiniteAlphaUsesOnlyTheIndicator) {
  const double alpha = alpha_infinite();
  for (double scale : {0.1, 1.0, 10.0}) {
    const std::vector<double> fa{2.0 * scale, -1.0 * scale};
    const std::vector<double> fb{0.5 * scale, 3.0 * scale};
    for (int kind = 1; kind <= 3; ++kind) {
      EXPECT_DOUBLE_EQ(pseudo_reward(kind, fa, fb, false, alpha), 0.0);
      EXPECT_DOUBLE_EQ(pseudo_reward(kind, fa, fb, true, alpha), 1.0);
    }
  }
}

TEST(ExecuteStep, ZeroNetBreaksTiesLow) {
  const CellIndexer cells(kToyGrid);
  DropOption option;
  option.horizon = 5;
  option.qnet = nn::make_zero_net(
      std::vector<int>{sim::Observation::feature_dim(cells.count()), kActionCount});
  const auto frame = zero_frame(cells.count());
  EXPECT_EQ(execute_step(option, obs_at(0, cells.count(), frame), 0), Action::kStay);
}

TEST(ExecuteStep, PicksTheLargestOutput) {
  const CellIndexer cells(kToyGrid);
  DropOption option;
  option.horizon = 5;
  option.qnet = nn::make_zero_net(
      std::vector<int>{sim::Observation::feature_dim(cells.count()), kActionCount});
  option.qnet.layers[0].bias[4] = 3.0;
  const auto frame = zero_frame(cells.count());
  EXPECT_EQ(execute_step(option, obs_at(0, cells.count(), frame), 4), Action::kWest);
}

TEST(ExecuteStep, ExpiredHorizonThrows) {
  const CellIndexer cells(kToyGrid);
  DropOption option;
  option.horizon = 2;
  option.qnet = nn::make_zero_net(
      std::vector<int>{sim::Observation::feature_dim(cells.count()), kActionCount});
  const auto frame = zero_frame(cells.count());
  EXPECT_THROW(execute_step(option, obs_at(0, cells.count(), frame), 2), std::logic_error);
}

TEST(GenerateOptions, ZeroCountGivesNothing) {
  OptionGenConfig cfg;
  cfg.option_count = 0;
  const std::vector<LegRecord> legs(1);
  EXPECT_TRUE(generate_options(legs, 8, cfg, 7, 0, 1).empty());
}

TEST(GenerateOptions, ThreeKindsShareOneFrozenEmbedding) {
  const CellIndexer cells(kToyGrid);
  const auto frame = zero_frame(cells.count());
  Rng rng(61);
  std::vector<LegRecord> legs;
  for (int i = 0; i < 200; ++i) {
    const int from = rng.uniform_int(cells.count());
    const int a = rng.uniform_int(kActionCount);
    const HexCoord to = apply_action(cells.at(from), action_from_code(a), kToyGrid);
    LegRecord leg;
    leg.from = obs_at(from, cells.count(), frame);
    leg.to = obs_at(cells.index_of(to), cells.count(), frame);
    leg.action = action_from_code(a);
    leg.matched = rng.uniform01() < 0.1;
    legs.push_back(std::move(leg));
  }
  OptionGenConfig cfg;
  cfg.option_count = 3;
  cfg.warmup_steps = 30;
  cfg.batch_size = 16;
  cfg.hidden = {8};
  cfg.embed.hidden = {8};
  cfg.embed.embed_dim = 2;
  cfg.embed.steps = 40;
  cfg.embed.batch_size = 16;
  const int input_dim = sim::Observation::feature_dim(cells.count());
  const auto options = generate_options(legs, input_dim, cfg, 7, 2, 99);
  ASSERT_EQ(options.size(), 3u);
  EXPECT_EQ(options[0].kind, 1);
  EXPECT_EQ(options[1].kind, 2);
  EXPECT_EQ(options[2].kind, 3);
  EXPECT_EQ(options[0].id, 7);
  EXPECT_EQ(options[2].id, 9);
  EXPECT_EQ(options[0].embedding.get(), options[1].embedding.get());
  EXPECT_EQ(options[1].embedding.get(), options[2].embedding.get());
  EXPECT_EQ(options[0].created_episode, 2);

  // Deterministic given the seed.
  const auto again = generate_options(legs, input_dim, cfg, 7, 2, 99);
  for (std::size_t i = 0; i < options.size(); ++i)
    for (std::size_t l = 0; l < options[i].qnet.layers.size(); ++l)
      EXPECT_EQ(options[i].qnet.layers[l].weights.data,
                again[i].qnet.layers[l].weights.data);
}

TEST(TabularOracle, GreedyPolicyInvariantUnderEmbeddingScale) {
  const CellIndexer cells(kToyGrid);
  const auto f1 = distance_field(cells, {1, -1}, 1.0);
  const auto f2 = distance_field(cells, {1, -1}, 2.0);
  for (int kind = 1; kind <= 3; ++kind) {
    const ToyQ a = ToyQ::solve(cells, kToyGrid, f1, kind, 0.0, 0.9);
    const ToyQ b = ToyQ::solve(cells, kToyGrid, f2, kind, 0.0, 0.9);
    for (int c = 0; c < cells.count(); ++c) EXPECT_EQ(a.greedy(c), b.greedy(c));
  }
}

TEST(TabularOracle, DescendingFieldLeadsToSink) {
  const CellIndexer cells(kToyGrid);
  const HexCoord sink{0, 0};
  const auto f = distance_field(cells, sink, 1.0);
  const ToyQ q = ToyQ::solve(cells, kToyGrid, f, 1, 0.0, 0.9);
  for (int start = 0; start < cells.count(); ++start) {
    HexCoord pos = cells.at(start);
    const int budget = hex_distance(pos, sink);
    for (int step = 0; step < budget; ++step)
      pos = apply_action(pos, action_from_code(q.greedy(cells.index_of(pos))), kToyGrid);
    EXPECT_EQ(pos, sink) << "from cell " << start;
  }
}

TEST(TrainedOption, DescendsTheEmbeddingNormField) {
  // A kind-1 option trained against a frozen distance-to-sink embedding
  // learns to walk downhill to the sink.
  const CellIndexer cells(kToyGrid);
  const HexCoord sink{0, 0};
  const auto frame = zero_frame(cells.count());
  const auto field = distance_field(cells, sink, 1.0);

  DropOption option;
  option.kind = 1;
  option.horizon = 10;
  option.embedding = std::make_shared<laplace::EmbeddingNet>(table_embedding(cells, field));
  Rng net_rng(62);
  const int input_dim = sim::Observation::feature_dim(cells.count());
  option.qnet = nn::make_net(std::vector<int>{input_dim, 32, kActionCount}, net_rng);

  std::vector<LegRecord> legs;
  for (int c = 0; c < cells.count(); ++c) {
    for (int a = 0; a < kActionCount; ++a) {
      const HexCoord to = apply_action(cells.at(c), action_from_code(a), kToyGrid);
      LegRecord leg;
      leg.from = obs_at(c, cells.count(), frame);
      leg.to = obs_at(cells.index_of(to), cells.count(), frame);
      leg.action = action_from_code(a);
      legs.push_back(std::move(leg));
    }
  }
  nn::DenseNet target = nn::hard_copy(option.qnet);
  nn::AdamState adam = nn::AdamState::for_net(option.qnet, 0.003);
  Rng sample_rng(63), noise(64);
  std::vector<const LegRecord*> batch(64);
  for (int step = 0; step < 4000; ++step) {
    for (auto& slot : batch)
      slot = &legs[static_cast<std::size_t>(sample_rng.uniform_int(static_cast<int>(legs.size())))];
    train_option_batch(option, target, adam, batch, 0.0, 0.9, noise);
    if ((step + 1) % 100 == 0) target = nn::hard_copy(option.qnet);
  }
  int reached = 0;
  for (int start = 0; start < cells.count(); ++start) {
    HexCoord pos = cells.at(start);
    for (int step = 0; step < hex_distance(cells.at(start), sink); ++step) {
      const Action a = execute_step(option, obs_at(cells.index_of(pos), cells.count(), frame), 0);
      pos = apply_action(pos, a, kToyGrid);
    }
    if (pos == sink) reached += 1;
  }
  EXPECT_EQ(reached, cells.count());
}

TEST(RandomEmbedding, SubstitutesUniformValues) {
  const CellIndexer cells(kToyGrid);
  const auto frame = zero_frame(cells.count());
  DropOption option;
  option.kind = 1;
  option.random_embedding = true;
  option.embedding = std::make_shared<laplace::EmbeddingNet>(
      table_embedding(cells, distance_field(cells, {0, 0}, 1.0)));
  option.qnet = nn::make_zero_net(
      std::vector<int>{sim::Observation::feature_dim(cells.count()), kActionCount});
  nn::DenseNet target = nn::hard_copy(option.qnet);
  nn::AdamState adam = nn::AdamState::for_net(option.qnet, 0.001);
  LegRecord leg;
  leg.from = obs_at(0, cells.count(), frame);
  leg.to = obs_at(1, cells.count(), frame);
  leg.action = Action::kEast;
  const std::vector<const LegRecord*> batch{&leg};
  Rng noise(65);
  // Trains without touching the real embedding; loss stays finite because the
  // fake embedding values live in [0,1).
  for (int i = 0; i < 50; ++i) {
    const double loss = train_option_batch(option, target, adam, batch, 1.0, 0.9, noise);
    EXPECT_TRUE(std::isfinite(loss));
  }
}
