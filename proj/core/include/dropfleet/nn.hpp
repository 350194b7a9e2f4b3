#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dropfleet/rng.hpp"

namespace dropfleet::nn {

using Vec = std::vector<double>;

/// Dense row-major matrix, sized once at construction.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Fully connected net: rectifier on hidden layers, identity output.
/// Parameters are double precision throughout so finite-difference checks
/// have headroom.
struct DenseNet {
  struct Layer {
    Mat weights;  // out x in
    Vec bias;     // out
  };

  std::vector<int> sizes;  // layer widths, input first
  std::vector<Layer> layers;

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t parameter_count() const;
};

/// Net with uniform fan-scaled initial weights (+-sqrt(6/(fan_in+fan_out))).
DenseNet make_net(std::span<const int> sizes, Rng& rng);

/// Net with all parameters zero (useful for tests and tabular setups).
DenseNet make_zero_net(std::span<const int> sizes);

/// Deterministic forward pass. Throws on input length mismatch.
Vec forward(const DenseNet& net, std::span<const double> x);

/// Parameter-shaped gradient accumulator.
struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> bias;

  static Gradients zeros_like(const DenseNet& net);
  void scale(double factor);
};

/// One training sample: input, target, and an optional per-output mask.
/// An empty mask means every output contributes; masked-out entries get
/// exactly zero gradient.
struct Sample {
  Vec input;
  Vec target;
  Vec mask;  // empty or output_size() entries
};

/// Exact gradients of the masked squared-error loss
///   L = (1/B) sum_b sum_i mask_i (y_i - t_i)^2
/// with respect to every parameter. Returns the loss as well.
Gradients backward_mse(const DenseNet& net, std::span<const Sample> batch,
                       double* loss_out = nullptr);

/// General reverse pass: accumulates parameter gradients for a batch of
/// (input, dL/dy) pairs. Lets callers differentiate arbitrary losses of the
/// network outputs (the embedding objective uses this path).
Gradients backward_from_output_grads(
    const DenseNet& net,
    std::span<const std::pair<Vec, Vec>> input_and_output_grad);

/// Adaptive-moment optimizer state (decay 0.9/0.999, epsilon 1e-8).
struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Mat> m_weights, v_weights;
  std::vector<Vec> m_bias, v_bias;

  static AdamState for_net(const DenseNet& net, double learning_rate = 0.001);
};

/// One optimizer step; increments the state's step counter.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& opt);

/// Deep copy with bitwise-equal parameters (target-network snapshot).
DenseNet hard_copy(const DenseNet& net);

/// Versioned binary checkpoint; round-trips parameters bit-exactly.
void save_net(const DenseNet& net, std::ostream& out);
DenseNet load_net(std::istream& in);
void save_net_file(const DenseNet& net, const std::string& path);
DenseNet load_net_file(const std::string& path);

}  // namespace dropfleet::nn
