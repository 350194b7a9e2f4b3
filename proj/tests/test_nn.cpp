#include "dropfleet/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace dropfleet;
using nn::DenseNet;
using nn::Sample;

namespace {

// Central finite differences of the masked MSE loss over every parameter.
nn::Gradients fd_gradients(DenseNet net, const std::vector<Sample>& batch,
                           double h = 1e-5) {
  auto loss_of = [&batch](const DenseNet& n) {
    double loss = 0;
    for (const Sample& s : batch) {
      const std::vector<double> y = nn::forward(n, s.input);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double m = s.mask.empty() ? 1.0 : s.mask[i];
        loss += m * (y[i] - s.target[i]) * (y[i] - s.target[i]);
      }
    }
    return loss / static_cast<double>(batch.size());
  };
  nn::Gradients g = nn::Gradients::zeros_like(net);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (std::size_t i = 0; i < net.layers[l].weights.data.size(); ++i) {
      double& p = net.layers[l].weights.data[i];
      const double keep = p;
      p = keep + h;
      const double up = loss_of(net);
      p = keep - h;
      const double down = loss_of(net);
      p = keep;
      g.weights[l].data[i] = (up - down) / (2 * h);
    }
    for (std::size_t i = 0; i < net.layers[l].bias.size(); ++i) {
      double& p = net.layers[l].bias[i];
      const double keep = p;
      p = keep + h;
      const double up = loss_of(net);
      p = keep - h;
      const double down = loss_of(net);
      p = keep;
      g.bias[l][i] = (up - down) / (2 * h);
    }
  }
  return g;
}

// Smallest |pre-activation| across hidden units and samples. Central
// differences are exact on the piecewise-quadratic loss except within h of a
// rectifier kink, so gradcheck points must keep clear of them.
double min_hidden_preactivation(const DenseNet& net,
                                const std::vector<Sample>& batch) {
  double closest = 1e300;
  for (const Sample& s : batch) {
    std::vector<double> a(s.input);
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      std::vector<double> z(static_cast<std::size_t>(layer.weights.rows));
      for (int i = 0; i < layer.weights.rows; ++i) {
        double acc = layer.bias[static_cast<std::size_t>(i)];
        for (int j = 0; j < layer.weights.cols; ++j)
          acc += layer.weights.at(i, j) * a[static_cast<std::size_t>(j)];
        z[static_cast<std::size_t>(i)] = acc;
        closest = std::min(closest, std::abs(acc));
      }
      for (double& v : z) v = v > 0 ? v : 0.0;
      a = std::move(z);
    }
  }
  return closest;
}

double max_rel_error(const nn::Gradients& a, const nn::Gradients& b) {
  double worst = 0;
  auto cmp = [&worst](double x, double y) {
    const double scale = std::max({1.0, std::abs(x), std::abs(y)});
    worst = std::max(worst, std::abs(x - y) / scale);
  };
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (std::size_t i = 0; i < a.weights[l].data.size(); ++i)
      cmp(a.weights[l].data[i], b.weights[l].data[i]);
    for (std::size_t i = 0; i < a.bias[l].size(); ++i)
      cmp(a.bias[l][i], b.bias[l][i]);
  }
  return worst;
}

}  // namespace

TEST(Forward, ZeroNetGivesZeros) {
  const std::vector<int> sizes{3, 4, 2};
  const DenseNet net = nn::make_zero_net(sizes);
  const std::vector<double> y = nn::forward(net, std::vector<double>{1, -2, 3});
  ASSERT_EQ(y.size(), 2u);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Forward, SingleLinearLayer) {
  DenseNet net = nn::make_zero_net(std::vector<int>{1, 1});
  net.layers[0].weights.at(0, 0) = 2.0;
  net.layers[0].bias[0] = 1.0;
  const std::vector<double> y = nn::forward(net, std::vector<double>{3.0});
  EXPECT_DOUBLE_EQ(y[0], 7.0);
}

TEST(Forward, RectifierClampsHidden) {
  // 1 -> 1 -> 1 with identity weights: negative input dies at the hidden unit.
  DenseNet net = nn::make_zero_net(std::vector<int>{1, 1, 1});
  net.layers[0].weights.at(0, 0) = 1.0;
  net.layers[1].weights.at(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(nn::forward(net, std::vector<double>{-5.0})[0], 0.0);
  EXPECT_DOUBLE_EQ(nn::forward(net, std::vector<double>{5.0})[0], 5.0);
}

TEST(Forward, DimensionMismatchThrows) {
  const DenseNet net = nn::make_zero_net(std::vector<int>{3, 2});
  EXPECT_THROW(nn::forward(net, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Backward, PerfectPredictionZeroGradients) {
  DenseNet net = nn::make_zero_net(std::vector<int>{2, 2});
  net.layers[0].weights.at(0, 0) = 1.0;
  net.layers[0].weights.at(1, 1) = 1.0;
  std::vector<Sample> batch{{{1.0, 2.0}, {1.0, 2.0}, {}}};
  const nn::Gradients g = nn::backward_mse(net, batch);
  for (double v : g.weights[0].data) EXPECT_EQ(v, 0.0);
  for (double v : g.bias[0]) EXPECT_EQ(v, 0.0);
}

TEST(Backward, OneParameterAnalytic) {
  // y = w x, L = (y - 0)^2 with w = 2, x = 1: dL/dw = 2 w x^2 = 4.
  DenseNet net = nn::make_zero_net(std::vector<int>{1, 1});
  net.layers[0].weights.at(0, 0) = 2.0;
  std::vector<Sample> batch{{{1.0}, {0.0}, {}}};
  const nn::Gradients g = nn::backward_mse(net, batch);
  EXPECT_DOUBLE_EQ(g.weights[0].data[0], 4.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(11);
  int checked = 0;
  while (checked < 5) {
    const std::vector<int> sizes{4, 8, 6, 3};
    DenseNet net = nn::make_net(sizes, rng);
    std::vector<Sample> batch;
    for (int b = 0; b < 4; ++b) {
      Sample s;
      for (int i = 0; i < 4; ++i) s.input.push_back(2 * rng.uniform01() - 1);
      for (int i = 0; i < 3; ++i) s.target.push_back(2 * rng.uniform01() - 1);
      batch.push_back(std::move(s));
    }
    if (min_hidden_preactivation(net, batch) < 1e-3) continue;  // kink too close
    ++checked;
    const nn::Gradients analytic = nn::backward_mse(net, batch);
    const nn::Gradients numeric = fd_gradients(net, batch);
    EXPECT_LT(max_rel_error(analytic, numeric), 1e-5);
  }
}

TEST(Backward, MaskedOutputsGetZeroGradient) {
  Rng rng(12);
  DenseNet net = nn::make_net(std::vector<int>{3, 2}, rng);
  std::vector<Sample> batch{{{0.3, -0.2, 0.9}, {5.0, 5.0}, {1.0, 0.0}}};
  const nn::Gradients g = nn::backward_mse(net, batch);
  // Output row 1 is masked out entirely.
  EXPECT_EQ(g.weights[0].at(1, 0), 0.0);
  EXPECT_EQ(g.weights[0].at(1, 1), 0.0);
  EXPECT_EQ(g.weights[0].at(1, 2), 0.0);
  EXPECT_EQ(g.bias[0][1], 0.0);
  EXPECT_NE(g.bias[0][0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(13);
  DenseNet net = nn::make_net(std::vector<int>{2, 2}, rng);
  const DenseNet before = net;
  nn::AdamState opt = nn::AdamState::for_net(net);
  const nn::Gradients zeros = nn::Gradients::zeros_like(net);
  nn::adam_step(net, zeros, opt);
  EXPECT_EQ(net.layers[0].weights.data, before.layers[0].weights.data);
  EXPECT_EQ(net.layers[0].bias, before.layers[0].bias);
  EXPECT_EQ(opt.step_count, 1);
}

TEST(Adam, FirstStepIsAboutLearningRate) {
  DenseNet net = nn::make_zero_net(std::vector<int>{1, 1});
  net.layers[0].weights.at(0, 0) = 0.5;
  nn::AdamState opt = nn::AdamState::for_net(net, 0.001);
  nn::Gradients g = nn::Gradients::zeros_like(net);
  g.weights[0].data[0] = 1.0;
  nn::adam_step(net, g, opt);
  EXPECT_NEAR(net.layers[0].weights.at(0, 0), 0.5 - 0.001, 1e-7);
}

TEST(Adam, Deterministic) {
  Rng rng(14);
  DenseNet a = nn::make_net(std::vector<int>{3, 5, 2}, rng);
  DenseNet b = a;
  nn::AdamState oa = nn::AdamState::for_net(a), ob = nn::AdamState::for_net(b);
  std::vector<Sample> batch{{{0.1, 0.2, 0.3}, {1.0, -1.0}, {}}};
  for (int i = 0; i < 10; ++i) {
    nn::adam_step(a, nn::backward_mse(a, batch), oa);
    nn::adam_step(b, nn::backward_mse(b, batch), ob);
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    EXPECT_EQ(a.layers[l].weights.data, b.layers[l].weights.data);
}

TEST(HardCopy, IndependentAndBitwiseEqual) {
  Rng rng(15);
  DenseNet src = nn::make_net(std::vector<int>{4, 6, 3}, rng);
  DenseNet copy = nn::hard_copy(src);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x;
    for (int j = 0; j < 4; ++j) x.push_back(2 * rng.uniform01() - 1);
    EXPECT_EQ(nn::forward(src, x), nn::forward(copy, x));
  }
  const DenseNet copy2 = nn::hard_copy(copy);
  src.layers[0].weights.at(0, 0) += 1.0;
  EXPECT_NE(src.layers[0].weights.at(0, 0), copy.layers[0].weights.at(0, 0));
  for (std::size_t l = 0; l < copy.layers.size(); ++l)
    EXPECT_EQ(copy.layers[l].weights.data, copy2.layers[l].weights.data);
}

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(16);
  const DenseNet net = nn::make_net(std::vector<int>{5, 7, 4}, rng);
  std::stringstream buffer;
  nn::save_net(net, buffer);
  const DenseNet loaded = nn::load_net(buffer);
  ASSERT_EQ(loaded.sizes, net.sizes);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(loaded.layers[l].weights.data, net.layers[l].weights.data);
    EXPECT_EQ(loaded.layers[l].bias, net.layers[l].bias);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream buffer("not a checkpoint");
  EXPECT_THROW(nn::load_net(buffer), std::runtime_error);
}
