#include <benchmark/benchmark.h>

#include "dropfleet/demand.hpp"
#include "dropfleet/hex.hpp"
#include "dropfleet/nn.hpp"
#include "dropfleet/policy.hpp"
#include "dropfleet/sim.hpp"
#include "dropfleet/terg.hpp"

using namespace dropfleet;

namespace {

void BM_HexDistance(benchmark::State& state) {
  Rng rng(1);
  const GridSpec grid{8, 600.0, 600.0};
  const CellIndexer cells(grid);
  std::vector<std::pair<HexCoord, HexCoord>> pairs;
  for (int i = 0; i < 1024; ++i)
    pairs.emplace_back(cells.at(rng.uniform_int(cells.count())),
                       cells.at(rng.uniform_int(cells.count())));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [a, b] = pairs[i++ & 1023];
    benchmark::DoNotOptimize(hex_distance(a, b));
  }
}
BENCHMARK(BM_HexDistance);

void BM_NetForward(benchmark::State& state) {
  Rng rng(2);
  const int input = static_cast<int>(state.range(0));
  const nn::DenseNet net = nn::make_net(std::vector<int>{input, 128, 16}, rng);
  std::vector<double> x(static_cast<std::size_t>(input));
  for (double& v : x) v = rng.uniform01();
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(net, x));
}
BENCHMARK(BM_NetForward)->Arg(128)->Arg(365);

void BM_NetTrainStep(benchmark::State& state) {
  Rng rng(3);
  nn::DenseNet net = nn::make_net(std::vector<int>{365, 64, 16}, rng);
  nn::AdamState adam = nn::AdamState::for_net(net);
  std::vector<nn::Sample> batch;
  for (int b = 0; b < 48; ++b) {
    nn::Sample s;
    s.input.resize(365);
    for (double& v : s.input) v = rng.uniform01();
    s.target.assign(16, 0.0);
    s.mask.assign(16, 0.0);
    s.target[static_cast<std::size_t>(b % 16)] = 1.0;
    s.mask[static_cast<std::size_t>(b % 16)] = 1.0;
    batch.push_back(std::move(s));
  }
  for (auto _ : state) {
    nn::Gradients grads = nn::backward_mse(net, batch);
    nn::adam_step(net, grads, adam);
  }
}
BENCHMARK(BM_NetTrainStep);

void BM_JacobiEigen(benchmark::State& state) {
  Rng rng(4);
  const int n = static_cast<int>(state.range(0));
  std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = 2 * rng.uniform01() - 1;
      m[static_cast<std::size_t>(i) * n + j] = v;
      m[static_cast<std::size_t>(j) * n + i] = v;
    }
  for (auto _ : state) benchmark::DoNotOptimize(terg::jacobi_eigen(m, n));
}
BENCHMARK(BM_JacobiEigen)->Arg(30)->Arg(100);

void BM_SimTickRandomPolicy(benchmark::State& state) {
  sim::SimConfig cfg;
  cfg.grid = {5, 600.0, 300.0};
  cfg.fleet_size = 20;
  cfg.episode_ticks = 1 << 30;  // never finishes inside the benchmark
  cfg.entry_window_ticks = 1;
  const CellIndexer cells(cfg.grid);
  const demand::DemandProfile profile = demand::synth_scenario(
      {{{4, 0}, 0.5, 9.0, 3.0}, {{-4, 0}, 0.5, 18.0, 3.0}}, 0.002, cells, 24, 60);
  sim::World world(cfg, demand::DemandSource::poisson(profile, cfg.grid), 5);
  Rng rng(6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(world.tick(
        policy::baseline_assignments(policy::ModelKind::kRandom, world, rng)));
  }
}
BENCHMARK(BM_SimTickRandomPolicy);

}  // namespace
