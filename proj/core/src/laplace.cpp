#include "dropfleet/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dropfleet::laplace {

double attract_loss(std::span<const double> fs, std::span<const double> fs2) {
  if (fs.size() != fs2.size())
    throw std::invalid_argument("attract_loss: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const double d = fs[i] - fs2[i];
    s += d * d;
  }
  return 0.5 * s;
}

double repulse_loss(std::span<const double> fs, std::span<const double> fs2) {
  if (fs.size() != fs2.size())
    throw std::invalid_argument("repulse_loss: length mismatch");
  double s = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (std::size_t j = 0; j < fs.size(); ++j) {
      const double dij = i == j ? 1.0 : 0.0;
      s += (fs[i] * fs[j] - dij) * (fs2[i] * fs2[j] - dij);
    }
  }
  return s;
}

EmbeddingNet EmbeddingNet::create(int input_dim, const EmbedConfig& cfg, Rng& rng) {
  if (cfg.embed_dim < 1)
    throw std::invalid_argument("EmbeddingNet: embed_dim must be >= 1");
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(cfg.embed_dim + 1);
  EmbeddingNet e;
  e.net = nn::make_net(sizes, rng);
  e.embed_dim = cfg.embed_dim;
  return e;
}

std::vector<double> EmbeddingNet::raw(std::span<const double> x) const {
  return nn::forward(net, x);
}

std::vector<double> EmbeddingNet::embed(std::span<const double> x) const {
  std::vector<double> y = nn::forward(net, x);
  return std::vector<double>(y.end() - embed_dim, y.end());
}

double EmbeddingNet::norm(std::span<const double> x) const {
  const std::vector<double> f = embed(x);
  double s = 0;
  for (double v : f) s += v * v;
  return std::sqrt(s);
}

double embedding_loss(const EmbeddingNet& phi,
                      std::span<const std::pair<int, int>> attract_pairs,
                      std::span<const std::pair<int, int>> repulse_pairs,
                      const PairDataset& data, double lambda,
                      nn::Gradients* grads) {
  const int dim = phi.net.output_size();
  // Forward every referenced state once.
  std::vector<int> involved;
  auto note = [&involved](int i) { involved.push_back(i); };
  for (const auto& [a, b] : attract_pairs) { note(a); note(b); }
  for (const auto& [a, b] : repulse_pairs) { note(a); note(b); }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
  std::vector<std::vector<double>> outputs(data.states.size());
  for (int i : involved)
    outputs[static_cast<std::size_t>(i)] =
        phi.raw(data.states[static_cast<std::size_t>(i)]);
  std::vector<std::vector<double>> output_grads;
  if (grads)
    output_grads.assign(data.states.size(), std::vector<double>());

  double loss = 0;
  const double inv_a = attract_pairs.empty() ? 0.0 : 1.0 / attract_pairs.size();
  const double inv_r = repulse_pairs.empty() ? 0.0 : 1.0 / repulse_pairs.size();
  auto grad_of = [&](int i) -> std::vector<double>& {
    auto& g = output_grads[static_cast<std::size_t>(i)];
    if (g.empty()) g.assign(static_cast<std::size_t>(dim), 0.0);
    return g;
  };

  for (const auto& [a, b] : attract_pairs) {
    const auto& fa = outputs[static_cast<std::size_t>(a)];
    const auto& fb = outputs[static_cast<std::size_t>(b)];
    loss += attract_loss(fa, fb) * inv_a;
    if (grads) {
      auto &ga = grad_of(a), &gb = grad_of(b);
      for (int i = 0; i < dim; ++i) {
        const double d = (fa[static_cast<std::size_t>(i)] -
                          fb[static_cast<std::size_t>(i)]) * inv_a;
        ga[static_cast<std::size_t>(i)] += d;
        gb[static_cast<std::size_t>(i)] -= d;
      }
    }
  }
  for (const auto& [a, b] : repulse_pairs) {
    const auto& fa = outputs[static_cast<std::size_t>(a)];
    const auto& fb = outputs[static_cast<std::size_t>(b)];
    loss += lambda * repulse_loss(fa, fb) * inv_r;
    if (grads) {
      // d/dfa sum_ij (fa_i fa_j - d_ij)(fb_i fb_j - d_ij) = 2 M(fb) fa,
      // with M(f) = f f^T - I; symmetric in the two members.
      auto &ga = grad_of(a), &gb = grad_of(b);
      const double scale = 2.0 * lambda * inv_r;
      for (int i = 0; i < dim; ++i) {
        double acc_a = 0, acc_b = 0;
        for (int j = 0; j < dim; ++j) {
          const double dij = i == j ? 1.0 : 0.0;
          acc_a += (fb[static_cast<std::size_t>(i)] * fb[static_cast<std::size_t>(j)] - dij) *
                   fa[static_cast<std::size_t>(j)];
          acc_b += (fa[static_cast<std::size_t>(i)] * fa[static_cast<std::size_t>(j)] - dij) *
                   fb[static_cast<std::size_t>(j)];
        }
        ga[static_cast<std::size_t>(i)] += scale * acc_a;
        gb[static_cast<std::size_t>(i)] += scale * acc_b;
      }
    }
  }

  if (grads) {
    std::vector<std::pair<nn::Vec, nn::Vec>> batch;
    for (int i : involved) {
      auto& g = output_grads[static_cast<std::size_t>(i)];
      if (g.empty()) continue;
      batch.emplace_back(data.states[static_cast<std::size_t>(i)], std::move(g));
    }
    *grads = nn::backward_from_output_grads(phi.net, batch);
  }
  return loss;
}

TrainedEmbedding train_embedding(const PairDataset& data, int input_dim,
                                 const EmbedConfig& cfg) {
  if (static_cast<int>(data.connected.size()) < cfg.batch_size)
    throw std::invalid_argument(
        "train_embedding: fewer relocation pairs than one batch");
  if (data.states.size() < 2)
    throw std::invalid_argument("train_embedding: need at least two states");
  Rng rng(cfg.seed);
  TrainedEmbedding out{EmbeddingNet::create(input_dim, cfg, rng), {}};
  nn::AdamState opt = nn::AdamState::for_net(out.phi.net, cfg.learning_rate);
  const int n_states = static_cast<int>(data.states.size());
  const int n_pairs = static_cast<int>(data.connected.size());
  std::vector<std::pair<int, int>> attract(static_cast<std::size_t>(cfg.batch_size));
  std::vector<std::pair<int, int>> repulse(static_cast<std::size_t>(cfg.batch_size));
  out.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& p : attract)
      p = data.connected[static_cast<std::size_t>(rng.uniform_int(n_pairs))];
    for (auto& p : repulse)
      p = {rng.uniform_int(n_states), rng.uniform_int(n_states)};
    nn::Gradients grads;
    const double loss =
        embedding_loss(out.phi, attract, repulse, data, cfg.lambda, &grads);
    nn::adam_step(out.phi.net, grads, opt);
    out.loss_history.push_back(loss);
  }
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b,
                bool* degenerate) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("spearman: bad inputs");
  auto ranks = [](std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) { ma += ra[i]; mb += rb[i]; }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0 || vb <= 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return cov / std::sqrt(va * vb);
}

ExactComparison compare_exact(
    const EmbeddingNet& phi,
    const std::function<std::vector<double>(int node)>& node_features,
    const terg::RelocationGraph& graph) {
  const int n = graph.node_count();
  if (n < 3) throw std::invalid_argument("compare_exact: graph too small");
  const terg::Embedding exact = terg::exact_embedding(graph, phi.embed_dim);
  std::vector<std::vector<double>> approx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) approx[static_cast<std::size_t>(i)] = phi.embed(node_features(i));
  std::vector<double> d_phi, d_exact;
  auto dist = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      d_phi.push_back(dist(approx[static_cast<std::size_t>(i)],
                           approx[static_cast<std::size_t>(j)]));
      d_exact.push_back(dist(exact.coords[static_cast<std::size_t>(i)],
                             exact.coords[static_cast<std::size_t>(j)]));
    }
  }
  ExactComparison out;
  out.rank_correlation = spearman(d_phi, d_exact, &out.degenerate);
  if (out.degenerate) out.rank_correlation = 0.0;
  return out;
}

}  // namespace dropfleet::laplace
