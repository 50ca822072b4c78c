#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

#include "mnl/backprop.hpp"
#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/network.hpp"
#include "mnl/numio.hpp"
#include "mnl/rng.hpp"

namespace mnl {

enum class OptimizerKind : std::uint8_t { Sgd = 0, Adam = 1 };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

// Adam first/second moments, kept at full parameter shape so that a neuron
// activated later simply starts from zero moments.  Entries of parameters that
// never receive gradients are never touched.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;

  struct LayerMoments {
    std::vector<double> m_w, v_w;  // fan_out * fan_in
    std::vector<double> m_b, v_b;  // fan_out
    double m_a = 0.0, v_a = 0.0;
  };
  std::vector<LayerMoments> layers;

  void ensure_shape(const NetworkState& net) {
    if (layers.size() == net.layers.size()) return;
    layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const Layer& l = net.layers[i];
      layers[i].m_w.assign(l.fan_in * l.fan_out, 0.0);
      layers[i].v_w.assign(l.fan_in * l.fan_out, 0.0);
      layers[i].m_b.assign(l.fan_out, 0.0);
      layers[i].v_b.assign(l.fan_out, 0.0);
    }
  }
};

namespace detail {

template <typename Fn>
void for_each_live_param(NetworkState& net, const GradientRecord& grads, Fn&& fn) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerGradients& lg = grads.layers[i];
    if (!lg.present) continue;
    Layer& l = net.layers[i];
    for (std::size_t ri = 0; ri < lg.rows.size(); ++ri) {
      const std::size_t r = lg.rows[ri];
      for (std::size_t ci = 0; ci < lg.cols.size(); ++ci) {
        const std::size_t c = lg.cols[ci];
        fn(i, r * l.fan_in + c, false, l.weights[r * l.fan_in + c],
           lg.weights[ri * lg.cols.size() + ci]);
      }
      fn(i, l.fan_in * l.fan_out + r, false, l.bias[r], lg.bias[ri]);
    }
    if (lg.has_alpha && !lg.rows.empty()) fn(i, 0, true, l.alpha, lg.alpha);
  }
}

}  // namespace detail

// One fixed-rate update.  SGD: w <- w - lr*g.  Adam: bias-corrected moment
// update with the conventional defaults.  Parameters without gradient entries
// (masked neurons, dormant layers) never move.
inline void step_fixed(NetworkState& net, const GradientRecord& grads, double learning_rate,
                       OptimizerState& state, OptimizerKind kind) {
  if (!(learning_rate > 0.0)) throw InvalidRange("learning_rate must be > 0");
  if (!all_finite(grads)) throw DivergenceError("non-finite gradient");

  if (kind == OptimizerKind::Sgd) {
    detail::for_each_live_param(net, grads,
                                [&](std::size_t, std::size_t, bool, double& p, double g) {
                                  p -= learning_rate * g;
                                });
    return;
  }

  state.ensure_shape(net);
  state.step_count += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  detail::for_each_live_param(
      net, grads, [&](std::size_t layer, std::size_t slot, bool is_alpha, double& p, double g) {
        OptimizerState::LayerMoments& lm = state.layers[layer];
        double& m = is_alpha ? lm.m_a : (slot < net.layers[layer].fan_in * net.layers[layer].fan_out
                                             ? lm.m_w[slot]
                                             : lm.m_b[slot - net.layers[layer].fan_in *
                                                                 net.layers[layer].fan_out]);
        double& v = is_alpha ? lm.v_a : (slot < net.layers[layer].fan_in * net.layers[layer].fan_out
                                             ? lm.v_w[slot]
                                             : lm.v_b[slot - net.layers[layer].fan_in *
                                                                 net.layers[layer].fan_out]);
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        p -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
      });
}

struct MonotoneStepResult {
  double accepted_rate = 0.0;  // 0 means no candidate decreased the loss
  double loss_before = 0.0;
  double loss_after = 0.0;
};

// Backtracking descent step: one full-batch gradient, then rates
// initial_rate * backtrack_factor^j until the full-batch loss strictly
// decreases.  If no candidate decreases it, the parameters stay put, so a
// training run under this step can never drive the loss up.
inline MonotoneStepResult step_monotone(NetworkState& net, const LabeledDataset& batch,
                                        const LossSpec& spec, double initial_rate,
                                        double backtrack_factor, std::size_t max_backtracks) {
  if (!(initial_rate > 0.0)) throw InvalidRange("initial_rate must be > 0");
  if (!(backtrack_factor > 0.0) || !(backtrack_factor < 1.0))
    throw InvalidRange("backtrack_factor must lie in (0, 1)");

  GradientRecord grads = backprop(net, batch, spec);
  MonotoneStepResult result;
  result.loss_before = result.loss_after = grads.loss;

  double rate = initial_rate;
  for (std::size_t j = 0; j <= max_backtracks; ++j) {
    NetworkState candidate = net;
    detail::for_each_live_param(candidate, grads,
                                [&](std::size_t, std::size_t, bool, double& p, double g) {
                                  p -= rate * g;
                                });
    const double candidate_loss = batch_loss(candidate, batch, spec);
    if (candidate_loss < grads.loss) {
      net = std::move(candidate);
      result.accepted_rate = rate;
      result.loss_after = candidate_loss;
      return result;
    }
    rate *= backtrack_factor;
  }
  return result;  // unchanged, accepted_rate 0
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0 = full batch
  LossSpec loss;
  bool monotone = false;  // use the backtracking step instead of fixed-rate updates
  double monotone_initial_rate = 0.5;
  double monotone_backtrack = 0.5;
  std::size_t monotone_max_backtracks = 30;
  std::uint64_t seed = 1;  // batch shuffling
};

struct TrainLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double grad_norm = 0.0;
  std::size_t active_params = 0;
};

inline void write_training_log_csv(const std::vector<TrainLogRow>& log, std::ostream& out) {
  out << "epoch,train_loss,val_loss,grad_norm,active_params\n";
  for (const TrainLogRow& r : log)
    out << format_u64(r.epoch) << "," << format_double(r.train_loss) << ","
        << format_double(r.val_loss) << "," << format_double(r.grad_norm) << ","
        << format_u64(r.active_params) << "\n";
}

namespace detail {

// One optimization epoch: full-batch when batch_size is 0 or monotone mode is
// on, otherwise seeded-shuffle minibatches in a fixed traversal order.
inline void run_training_epoch(NetworkState& net, const LabeledDataset& train_ds,
                               const TrainConfig& cfg, OptimizerState& opt_state,
                               Rng& shuffle_rng) {
  if (cfg.monotone) {
    step_monotone(net, train_ds, cfg.loss, cfg.monotone_initial_rate, cfg.monotone_backtrack,
                  cfg.monotone_max_backtracks);
    return;
  }
  if (cfg.batch_size == 0 || cfg.batch_size >= train_ds.size()) {
    GradientRecord grads = backprop(net, train_ds, cfg.loss);
    step_fixed(net, grads, cfg.learning_rate, opt_state, cfg.optimizer);
    return;
  }
  std::vector<std::size_t> order(train_ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_indices(order, shuffle_rng);
  LabeledDataset batch;
  batch.input_dim = train_ds.input_dim;
  batch.label_dim = train_ds.label_dim;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    batch.inputs.clear();
    batch.labels.clear();
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(train_ds.input(order[i]), train_ds.label(order[i]));
    GradientRecord grads = backprop(net, batch, cfg.loss);
    step_fixed(net, grads, cfg.learning_rate, opt_state, cfg.optimizer);
  }
}

}  // namespace detail

// Plain training loop over a fixed architecture.  The log records full-batch
// train loss, validation loss, gradient norm and live parameter count per
// epoch.
inline std::vector<TrainLogRow> train(NetworkState& net, const LabeledDataset& train_ds,
                                      const LabeledDataset& val_ds, const TrainConfig& cfg) {
  OptimizerState opt_state;
  Rng shuffle_rng = Rng(cfg.seed).fork(0xba7c5);
  std::vector<TrainLogRow> log;
  log.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::run_training_epoch(net, train_ds, cfg, opt_state, shuffle_rng);
    GradientRecord grads = backprop(net, train_ds, cfg.loss);
    TrainLogRow row;
    row.epoch = epoch;
    row.train_loss = grads.loss;
    row.val_loss = val_ds.size() > 0 ? batch_loss(net, val_ds, cfg.loss) : grads.loss;
    row.grad_norm = grad_l2_norm(grads);
    row.active_params = effective_params(net);
    log.push_back(row);
  }
  return log;
}

}  // namespace mnl
