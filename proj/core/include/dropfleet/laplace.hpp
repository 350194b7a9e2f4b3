#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dropfleet/nn.hpp"
#include "dropfleet/terg.hpp"

namespace dropfleet::laplace {

/// Attractive half of the embedding objective for one connected pair:
/// 0.5 * sum_i (f_i(s) - f_i(s'))^2.
double attract_loss(std::span<const double> fs, std::span<const double> fs2);

/// Repulsive term for one independently drawn pair:
/// sum_ij (f_i(s) f_j(s) - delta_ij)(f_i(s') f_j(s') - delta_ij).
double repulse_loss(std::span<const double> fs, std::span<const double> fs2);

struct EmbedConfig {
  int embed_dim = 8;                    // D; the net has D+1 outputs
  std::vector<int> hidden = {512, 128};
  double lambda = 1.0;                  // repulsion multiplier
  int batch_size = 32;
  double learning_rate = 0.001;
  int steps = 2000;
  std::uint64_t seed = 1;
};

/// Function approximator of the spectral representation. The net carries one
/// extra output whose limit is the constant eigenfunction; embed() exposes
/// the last D outputs.
struct EmbeddingNet {
  nn::DenseNet net;
  int embed_dim = 0;

  static EmbeddingNet create(int input_dim, const EmbedConfig& cfg, Rng& rng);

  std::vector<double> raw(std::span<const double> x) const;
  std::vector<double> embed(std::span<const double> x) const;
  double norm(std::span<const double> x) const;
};

/// Snapshot of relocation experience for embedding training: a pool of state
/// feature vectors and index pairs of states linked by one relocation step.
/// The pool doubles as the empirical marginal the repulsive pairs are drawn
/// from.
struct PairDataset {
  std::vector<std::vector<double>> states;
  std::vector<std::pair<int, int>> connected;
};

/// Combined objective over raw outputs: mean attract over connected pairs
/// plus lambda times mean repulse over independent pairs. Fills exact
/// parameter gradients when grads != nullptr.
double embedding_loss(const EmbeddingNet& phi,
                      std::span<const std::pair<int, int>> attract_pairs,
                      std::span<const std::pair<int, int>> repulse_pairs,
                      const PairDataset& data, double lambda,
                      nn::Gradients* grads);

struct TrainedEmbedding {
  EmbeddingNet phi;
  std::vector<double> loss_history;
};

/// Minimize the unconstrained objective by stochastic gradient steps over
/// the snapshot. Deterministic given the config seed.
TrainedEmbedding train_embedding(const PairDataset& data, int input_dim,
                                 const EmbedConfig& cfg);

struct ExactComparison {
  double rank_correlation = 0.0;
  bool degenerate = false;  // one of the distance lists had no variation
};

/// Spearman rank correlation between pairwise distances under phi and under
/// the exact spectral embedding of the graph, over all node pairs.
ExactComparison compare_exact(
    const EmbeddingNet& phi,
    const std::function<std::vector<double>(int node)>& node_features,
    const terg::RelocationGraph& graph);

/// Spearman correlation of two equally long value lists (average ranks for
/// ties). Exposed for reuse by diagnostics.
double spearman(std::span<const double> a, std::span<const double> b,
                bool* degenerate = nullptr);

}  // namespace dropfleet::laplace
