#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/rng.hpp"

namespace mnl {

// Every supported activation satisfies P(0) = 0, which is what lets masked
// neurons (zero incoming weights, zero bias) contribute exactly nothing
// downstream.
enum class Activation : std::uint8_t { Identity = 0, LeakyRelu = 1, PRelu = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::LeakyRelu: return "leaky_relu";
    default: return "prelu";
  }
}

struct Layer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;  // fan_out x fan_in, row-major
  std::vector<double> bias;     // fan_out
  Activation activation = Activation::LeakyRelu;
  double alpha = 0.01;  // negative-side slope; trainable when activation is PRelu
  // P'(0) convention.  The right derivative (1) lets gradient reach a freshly
  // activated neuron whose pre-activation is exactly 0.
  double derivative_at_zero = 1.0;
  std::vector<std::uint8_t> active;  // per-neuron mask; 0 = masked out
  bool dormant = false;              // whole layer acts as an exact pass-through

  double w(std::size_t r, std::size_t c) const { return weights[r * fan_in + c]; }
  double& w(std::size_t r, std::size_t c) { return weights[r * fan_in + c]; }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto a : active) n += a ? 1 : 0;
    return n;
  }
};

struct NetworkState {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<Layer> layers;
};

inline double activate(const Layer& l, double x) {
  if (l.activation == Activation::Identity) return x;
  return x >= 0.0 ? x : l.alpha * x;
}

inline double activate_derivative(const Layer& l, double x) {
  if (l.activation == Activation::Identity) return 1.0;
  if (x > 0.0) return 1.0;
  if (x < 0.0) return l.alpha;
  return l.derivative_at_zero;
}

inline void validate(const NetworkState& net) {
  if (net.layers.empty()) throw ShapeError("network has no layers");
  std::size_t prev = net.input_dim;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (l.fan_in != prev) throw ShapeError(where + ": fan_in does not match preceding width");
    if (l.weights.size() != l.fan_in * l.fan_out || l.bias.size() != l.fan_out ||
        l.active.size() != l.fan_out)
      throw ShapeError(where + ": buffer sizes do not match fan_in/fan_out");
    if (l.dormant && l.fan_in != l.fan_out)
      throw ShapeError(where + ": dormant layer must be square");
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      if (l.active[r]) continue;
      if (l.bias[r] != 0.0) throw ShapeError(where + ": masked neuron has nonzero bias");
      for (std::size_t c = 0; c < l.fan_in; ++c)
        if (l.w(r, c) != 0.0)
          throw ShapeError(where + ": masked neuron has nonzero incoming weight");
    }
    for (double v : l.weights)
      if (!std::isfinite(v)) throw ShapeError(where + ": non-finite weight");
    for (double v : l.bias)
      if (!std::isfinite(v)) throw ShapeError(where + ": non-finite bias");
    if (!std::isfinite(l.alpha)) throw ShapeError(where + ": non-finite alpha");
    prev = l.fan_out;
  }
  if (prev != net.output_dim) throw ShapeError("last layer width does not match output_dim");
}

// z_i = P_i(W_i z_{i-1} + b_i) per non-dormant layer; dormant layers are
// skipped entirely, masked neurons output exactly 0.  Buffers are reused so
// training loops can call this per sample without allocating.
inline void forward_into(const NetworkState& net, std::span<const double> x,
                         std::vector<double>& out, std::vector<double>& scratch) {
  if (x.size() != net.input_dim) throw ShapeError("forward: input dimension mismatch");
  out.assign(x.begin(), x.end());
  for (const Layer& l : net.layers) {
    if (l.dormant) continue;
    scratch.assign(l.fan_out, 0.0);
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      if (!l.active[r]) continue;
      const double* wrow = l.weights.data() + r * l.fan_in;
      double acc = 0.0;
      for (std::size_t c = 0; c < l.fan_in; ++c) acc += wrow[c] * out[c];
      acc += l.bias[r];
      scratch[r] = activate(l, acc);
    }
    out.swap(scratch);
  }
}

inline std::vector<double> forward(const NetworkState& net, std::span<const double> x) {
  std::vector<double> out, scratch;
  forward_into(net, x, out, scratch);
  return out;
}

enum class Reduction : std::uint8_t { Mean = 0, Sum = 1 };

// Difference norm used as the training objective: per-sample value is
// sum_i |pred_i - target_i|^p (so p=2 with mean reduction over a batch is MSE).
struct LossSpec {
  int p = 2;  // supported: 1 and 2
  Reduction reduction = Reduction::Mean;
};

inline double sample_loss(std::span<const double> pred, std::span<const double> target,
                          const LossSpec& spec) {
  if (pred.size() != target.size()) throw ShapeError("loss: dimension mismatch");
  double acc = 0.0;
  if (spec.p == 1) {
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  } else {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double d = pred[i] - target[i];
      acc += d * d;
    }
  }
  return acc;
}

inline double lp_norm(std::span<const double> v, int p) {
  double acc = 0.0;
  if (p == 1) {
    for (double x : v) acc += std::abs(x);
    return acc;
  }
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline double batch_loss(const NetworkState& net, const LabeledDataset& batch,
                         const LossSpec& spec) {
  if (batch.size() == 0) throw EmptyBatch();
  std::vector<double> out, scratch;
  double acc = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    forward_into(net, batch.input(j), out, scratch);
    acc += sample_loss(out, batch.label(j), spec);
  }
  if (spec.reduction == Reduction::Mean) acc /= static_cast<double>(batch.size());
  return acc;
}

// Trainable parameters attached to the live sub-network: per active neuron in
// a non-dormant layer, the weights from active effective inputs plus the bias,
// plus one slope per non-dormant PRelu layer that has any active neuron.
inline std::size_t effective_params(const NetworkState& net) {
  std::size_t count = 0;
  // Effective input mask starts as the raw input (always live).
  std::vector<std::uint8_t> in_mask(net.input_dim, 1);
  for (const Layer& l : net.layers) {
    if (l.dormant) continue;  // pass-through: effective input mask unchanged
    std::size_t in_active = 0;
    for (auto a : in_mask) in_active += a ? 1 : 0;
    std::size_t rows = l.active_count();
    count += rows * (in_active + 1);
    if (l.activation == Activation::PRelu && rows > 0) count += 1;
    in_mask = l.active;
  }
  return count;
}

// Fresh fully-connected network with every neuron active.
inline NetworkState make_dense_network(std::size_t input_dim,
                                       const std::vector<std::size_t>& hidden,
                                       std::size_t output_dim, Activation activation,
                                       double alpha = 0.01) {
  NetworkState net;
  net.input_dim = input_dim;
  net.output_dim = output_dim;
  std::size_t prev = input_dim;
  auto add_layer = [&](std::size_t width, Activation act) {
    Layer l;
    l.fan_in = prev;
    l.fan_out = width;
    l.weights.assign(prev * width, 0.0);
    l.bias.assign(width, 0.0);
    l.activation = act;
    l.alpha = alpha;
    l.active.assign(width, 1);
    net.layers.push_back(std::move(l));
    prev = width;
  };
  for (std::size_t h : hidden) add_layer(h, activation);
  add_layer(output_dim, Activation::Identity);  // linear readout
  return net;
}

// Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)) over the active
// sub-network; biases start at 0.  Draw order is layer/row/column ascending.
inline void init_weights(NetworkState& net, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> in_mask(net.input_dim, 1);
  for (Layer& l : net.layers) {
    if (l.dormant) continue;
    std::size_t in_active = 0;
    for (auto a : in_mask) in_active += a ? 1 : 0;
    std::size_t out_active = l.active_count();
    double s = std::sqrt(6.0 / static_cast<double>(in_active + out_active));
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      if (!l.active[r]) continue;
      for (std::size_t c = 0; c < l.fan_in; ++c)
        if (in_mask[c]) l.w(r, c) = rng.uniform(-s, s);
      l.bias[r] = 0.0;
    }
    in_mask = l.active;
  }
}

}  // namespace mnl
