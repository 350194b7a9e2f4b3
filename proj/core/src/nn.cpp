#include "dropfleet/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace dropfleet::nn {

namespace {

void check_sizes(std::span<const int> sizes) {
  if (sizes.size() < 2)
    throw std::invalid_argument("DenseNet needs at least input and output sizes");
  for (int s : sizes)
    if (s <= 0) throw std::invalid_argument("DenseNet: layer sizes must be positive");
}

// Forward pass keeping pre-activations of every layer for the reverse sweep.
struct Trace {
  std::vector<Vec> activations;  // activations[0] = input, .. [L] = output
};

Vec forward_traced(const DenseNet& net, std::span<const double> x, Trace* trace) {
  if (static_cast<int>(x.size()) != net.input_size())
    throw std::invalid_argument("forward: input length mismatch");
  Vec a(x.begin(), x.end());
  if (trace) trace->activations.push_back(a);
  const std::size_t last = net.layers.size() - 1;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Vec z(static_cast<std::size_t>(layer.weights.rows));
    for (int i = 0; i < layer.weights.rows; ++i) {
      double acc = layer.bias[static_cast<std::size_t>(i)];
      const double* w = &layer.weights.data[static_cast<std::size_t>(i) * layer.weights.cols];
      for (int j = 0; j < layer.weights.cols; ++j) acc += w[j] * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = acc;
    }
    if (l != last)
      for (double& v : z) v = v > 0 ? v : 0.0;
    a = std::move(z);
    if (trace) trace->activations.push_back(a);
  }
  return a;
}

// Reverse sweep from dL/dy at a single sample; accumulates into grads.
void accumulate_backward(const DenseNet& net, const Trace& trace,
                         Vec delta, Gradients& grads) {
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = net.layers[static_cast<std::size_t>(l)];
    const Vec& a_in = trace.activations[static_cast<std::size_t>(l)];
    auto& gw = grads.weights[static_cast<std::size_t>(l)];
    auto& gb = grads.bias[static_cast<std::size_t>(l)];
    for (int i = 0; i < layer.weights.rows; ++i) {
      const double d = delta[static_cast<std::size_t>(i)];
      if (d == 0.0) continue;
      gb[static_cast<std::size_t>(i)] += d;
      double* gw_row = &gw.data[static_cast<std::size_t>(i) * gw.cols];
      for (int j = 0; j < layer.weights.cols; ++j)
        gw_row[j] += d * a_in[static_cast<std::size_t>(j)];
    }
    if (l == 0) break;
    Vec prev(static_cast<std::size_t>(layer.weights.cols), 0.0);
    for (int i = 0; i < layer.weights.rows; ++i) {
      const double d = delta[static_cast<std::size_t>(i)];
      if (d == 0.0) continue;
      const double* w = &layer.weights.data[static_cast<std::size_t>(i) * layer.weights.cols];
      for (int j = 0; j < layer.weights.cols; ++j)
        prev[static_cast<std::size_t>(j)] += d * w[j];
    }
    // Rectifier derivative of the layer below, taken on its post-activation
    // (positive output <=> positive pre-activation).
    const Vec& a_prev = trace.activations[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < prev.size(); ++j)
      if (a_prev[j] <= 0.0) prev[j] = 0.0;
    delta = std::move(prev);
  }
}

}  // namespace

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
  return n;
}

DenseNet make_net(std::span<const int> sizes, Rng& rng) {
  check_sizes(sizes);
  DenseNet net;
  net.sizes.assign(sizes.begin(), sizes.end());
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseNet::Layer layer;
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    layer.weights = Mat(fan_out, fan_in);
    layer.bias.assign(static_cast<std::size_t>(fan_out), 0.0);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : layer.weights.data) w = (2 * rng.uniform01() - 1) * bound;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

DenseNet make_zero_net(std::span<const int> sizes) {
  check_sizes(sizes);
  DenseNet net;
  net.sizes.assign(sizes.begin(), sizes.end());
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseNet::Layer layer;
    layer.weights = Mat(sizes[l + 1], sizes[l]);
    layer.bias.assign(static_cast<std::size_t>(sizes[l + 1]), 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Vec forward(const DenseNet& net, std::span<const double> x) {
  return forward_traced(net, x, nullptr);
}

Gradients Gradients::zeros_like(const DenseNet& net) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.weights.emplace_back(l.weights.rows, l.weights.cols);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void Gradients::scale(double factor) {
  for (auto& m : weights)
    for (double& v : m.data) v *= factor;
  for (auto& b : bias)
    for (double& v : b) v *= factor;
}

Gradients backward_mse(const DenseNet& net, std::span<const Sample> batch,
                       double* loss_out) {
  if (batch.empty()) throw std::invalid_argument("backward_mse: empty batch");
  Gradients grads = Gradients::zeros_like(net);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  for (const Sample& s : batch) {
    if (static_cast<int>(s.target.size()) != net.output_size())
      throw std::invalid_argument("backward_mse: target length mismatch");
    if (!s.mask.empty() && s.mask.size() != s.target.size())
      throw std::invalid_argument("backward_mse: mask length mismatch");
    Trace trace;
    Vec y = forward_traced(net, s.input, &trace);
    Vec delta(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double m = s.mask.empty() ? 1.0 : s.mask[i];
      const double err = y[i] - s.target[i];
      loss += m * err * err * inv_batch;
      delta[i] = 2.0 * m * err * inv_batch;
    }
    accumulate_backward(net, trace, std::move(delta), grads);
  }
  if (loss_out) *loss_out = loss;
  return grads;
}

Gradients backward_from_output_grads(
    const DenseNet& net,
    std::span<const std::pair<Vec, Vec>> input_and_output_grad) {
  Gradients grads = Gradients::zeros_like(net);
  for (const auto& [x, dy] : input_and_output_grad) {
    if (static_cast<int>(dy.size()) != net.output_size())
      throw std::invalid_argument("backward_from_output_grads: grad length mismatch");
    Trace trace;
    forward_traced(net, x, &trace);
    accumulate_backward(net, trace, dy, grads);
  }
  return grads;
}

AdamState AdamState::for_net(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& l : net.layers) {
    s.m_weights.emplace_back(l.weights.rows, l.weights.cols);
    s.v_weights.emplace_back(l.weights.rows, l.weights.cols);
    s.m_bias.emplace_back(l.bias.size(), 0.0);
    s.v_bias.emplace_back(l.bias.size(), 0.0);
  }
  return s;
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& opt) {
  if (grads.weights.size() != net.layers.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  opt.step_count += 1;
  const double b1t = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
  const double b2t = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
  auto update = [&](double& param, double g, double& m, double& v) {
    m = opt.beta1 * m + (1 - opt.beta1) * g;
    v = opt.beta2 * v + (1 - opt.beta2) * g * g;
    param -= opt.learning_rate * (m / b1t) / (std::sqrt(v / b2t) + opt.epsilon);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
      update(layer.weights.data[i], grads.weights[l].data[i],
             opt.m_weights[l].data[i], opt.v_weights[l].data[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      update(layer.bias[i], grads.bias[l][i], opt.m_bias[l][i], opt.v_bias[l][i]);
  }
}

DenseNet hard_copy(const DenseNet& net) { return net; }

namespace {
constexpr char kMagic[8] = {'D', 'F', 'N', 'E', 'T', '0', '1', '\0'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const Vec& v) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
  }
}

void read_doubles(std::istream& in, Vec& v) {
  for (double& d : v) {
    const std::uint64_t bits = read_u64(in);
    std::memcpy(&d, &bits, 8);
  }
}
}  // namespace

void save_net(const DenseNet& net, std::ostream& out) {
  out.write(kMagic, 8);
  write_u64(out, net.sizes.size());
  for (int s : net.sizes) write_u64(out, static_cast<std::uint64_t>(s));
  for (const auto& layer : net.layers) {
    write_doubles(out, layer.weights.data);
    write_doubles(out, layer.bias);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

DenseNet load_net(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic or version");
  const std::uint64_t n_sizes = read_u64(in);
  if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("checkpoint: bad header");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = static_cast<int>(read_u64(in));
  DenseNet net = make_zero_net(sizes);
  for (auto& layer : net.layers) {
    read_doubles(in, layer.weights.data);
    read_doubles(in, layer.bias);
  }
  return net;
}

void save_net_file(const DenseNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  save_net(net, out);
}

DenseNet load_net_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_net(in);
}

}  // namespace dropfleet::nn
