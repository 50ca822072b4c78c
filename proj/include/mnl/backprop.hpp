#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/network.hpp"

namespace mnl {

// Gradients for one layer, restricted to the live sub-network: entries exist
// only for active neurons (rows) and active effective inputs (cols).  Masked
// and dormant parameters have no slot at all.
struct LayerGradients {
  bool present = false;            // false for dormant layers
  std::vector<std::size_t> rows;   // active neuron indices
  std::vector<std::size_t> cols;   // active indices of the effective input
  std::vector<double> weights;     // rows.size() x cols.size(), row-major
  std::vector<double> bias;        // rows.size()
  bool has_alpha = false;
  double alpha = 0.0;
};

struct GradientRecord {
  double loss = 0.0;
  std::vector<LayerGradients> layers;  // parallel to net.layers
};

inline double grad_l2_norm(const GradientRecord& g) {
  double acc = 0.0;
  for (const LayerGradients& lg : g.layers) {
    if (!lg.present) continue;
    for (double v : lg.weights) acc += v * v;
    for (double v : lg.bias) acc += v * v;
    if (lg.has_alpha) acc += lg.alpha * lg.alpha;
  }
  return std::sqrt(acc);
}

inline bool all_finite(const GradientRecord& g) {
  for (const LayerGradients& lg : g.layers) {
    if (!lg.present) continue;
    for (double v : lg.weights)
      if (!std::isfinite(v)) return false;
    for (double v : lg.bias)
      if (!std::isfinite(v)) return false;
    if (lg.has_alpha && !std::isfinite(lg.alpha)) return false;
  }
  return true;
}

// Exact reverse-mode gradients of the batch loss with respect to every live
// parameter.  Samples are visited in index order and gradients reduced in that
// fixed order, so results are reproducible bit for bit.
inline GradientRecord backprop(const NetworkState& net, const LabeledDataset& batch,
                               const LossSpec& spec) {
  if (batch.size() == 0) throw EmptyBatch();
  if (batch.input_dim != net.input_dim || batch.label_dim != net.output_dim)
    throw ShapeError("backprop: batch dimensions do not match network");

  GradientRecord record;
  record.layers.resize(net.layers.size());

  // Live structure: active rows per layer, active effective inputs per layer.
  std::vector<std::uint8_t> in_mask(net.input_dim, 1);
  std::vector<std::size_t> stages;  // indices of non-dormant layers
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    LayerGradients& lg = record.layers[i];
    if (l.dormant) continue;
    lg.present = true;
    for (std::size_t c = 0; c < l.fan_in; ++c)
      if (in_mask[c]) lg.cols.push_back(c);
    for (std::size_t r = 0; r < l.fan_out; ++r)
      if (l.active[r]) lg.rows.push_back(r);
    lg.weights.assign(lg.rows.size() * lg.cols.size(), 0.0);
    lg.bias.assign(lg.rows.size(), 0.0);
    lg.has_alpha = l.activation == Activation::PRelu;
    in_mask = l.active;
    stages.push_back(i);
  }

  const std::size_t n_stage = stages.size();
  std::vector<std::vector<double>> z(n_stage + 1);  // z[0] = x, z[t] = stage t output
  std::vector<std::vector<double>> pre(n_stage);    // pre-activations per stage
  std::vector<double> delta, delta_prev;

  double loss_acc = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    auto x = batch.input(j);
    z[0].assign(x.begin(), x.end());
    for (std::size_t t = 0; t < n_stage; ++t) {
      const Layer& l = net.layers[stages[t]];
      pre[t].assign(l.fan_out, 0.0);
      z[t + 1].assign(l.fan_out, 0.0);
      for (std::size_t r = 0; r < l.fan_out; ++r) {
        if (!l.active[r]) continue;
        const double* wrow = l.weights.data() + r * l.fan_in;
        double acc = 0.0;
        for (std::size_t c = 0; c < l.fan_in; ++c) acc += wrow[c] * z[t][c];
        acc += l.bias[r];
        pre[t][r] = acc;
        z[t + 1][r] = activate(l, acc);
      }
    }

    auto target = batch.label(j);
    const std::vector<double>& out = z[n_stage];
    delta.assign(net.output_dim, 0.0);
    for (std::size_t i = 0; i < net.output_dim; ++i) {
      double d = out[i] - target[i];
      loss_acc += spec.p == 1 ? std::abs(d) : d * d;
      delta[i] = spec.p == 1 ? (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) : 2.0 * d;
    }

    for (std::size_t t = n_stage; t-- > 0;) {
      const Layer& l = net.layers[stages[t]];
      LayerGradients& lg = record.layers[stages[t]];
      delta_prev.assign(l.fan_in, 0.0);
      for (std::size_t ri = 0; ri < lg.rows.size(); ++ri) {
        const std::size_t r = lg.rows[ri];
        const double a = pre[t][r];
        const double g = delta[r] * activate_derivative(l, a);
        if (g != 0.0) {
          lg.bias[ri] += g;
          double* wg = lg.weights.data() + ri * lg.cols.size();
          for (std::size_t ci = 0; ci < lg.cols.size(); ++ci)
            wg[ci] += g * z[t][lg.cols[ci]];
          const double* wrow = l.weights.data() + r * l.fan_in;
          for (std::size_t c = 0; c < l.fan_in; ++c) delta_prev[c] += wrow[c] * g;
        }
        if (lg.has_alpha && a < 0.0) lg.alpha += delta[r] * a;
      }
      delta.swap(delta_prev);
    }
  }

  if (spec.reduction == Reduction::Mean) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    loss_acc *= inv;
    for (LayerGradients& lg : record.layers) {
      if (!lg.present) continue;
      for (double& v : lg.weights) v *= inv;
      for (double& v : lg.bias) v *= inv;
      lg.alpha *= inv;
    }
  }
  record.loss = loss_acc;
  return record;
}

}  // namespace mnl
