#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mnl/backprop.hpp"
#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/network.hpp"
#include "mnl/numio.hpp"
#include "mnl/optimizer.hpp"
#include "mnl/rng.hpp"

namespace mnl {

// Thresholds and caps governing when the trainer unmasks capacity (width or
// depth) and when it masks it back out.
struct GrowthPolicy {
  double grad_threshold = 0.0;         // grow when full-batch gradient norm falls below
  double rel_improve_threshold = 0.0;  // ... or window-relative improvement falls below
  std::size_t window = 1;              // epochs considered by the plateau test
  std::size_t width_step = 1;          // neurons unmasked per width switch
  double target_val_loss = 0.0;        // stop growing once validation reaches this
  double prune_threshold = 0.0;        // outgoing l1 norm below which a neuron may be dropped
  std::size_t prune_patience = 1;      // consecutive epochs below threshold before dropping
  std::size_t max_active_width = 0;    // per-layer cap on unmasked neurons
  std::size_t max_active_depth = 0;    // cap on non-dormant layers (output included)
};

enum class GrowthKind : std::uint8_t { WidthGrow, DepthGrow, Prune };

inline const char* to_string(GrowthKind k) {
  switch (k) {
    case GrowthKind::WidthGrow: return "width";
    case GrowthKind::DepthGrow: return "depth";
    default: return "prune";
  }
}

struct GrowthEvent {
  std::size_t epoch = 0;
  GrowthKind kind = GrowthKind::WidthGrow;
  std::size_t layer = 0;
  // Width events: neurons unmasked.  Depth events: 1.  Prune events: the
  // dropped neuron's index.
  std::size_t count = 0;
  double pre_loss = 0.0;
  double post_loss = 0.0;
  double function_drift = 0.0;  // max |output change| over the probe set
  // Prune events only: the Lipschitz-style ceiling the drift must stay under.
  double drift_bound = 0.0;
  std::size_t active_params = 0;
};

inline void write_growth_log_csv(const std::vector<GrowthEvent>& log, std::ostream& out) {
  out << "epoch,kind,layer,count,pre_loss,post_loss,function_drift,active_params\n";
  for (const GrowthEvent& e : log)
    out << format_u64(e.epoch) << "," << to_string(e.kind) << "," << format_u64(e.layer) << ","
        << format_u64(e.count) << "," << format_double(e.pre_loss) << ","
        << format_double(e.post_loss) << "," << format_double(e.function_drift) << ","
        << format_u64(e.active_params) << "\n";
}

// Fixed set of inputs used to measure how much a structural edit moved the
// computed function.
struct ProbeInputs {
  std::size_t dim = 0;
  std::vector<double> flat;

  std::size_t count() const { return dim == 0 ? 0 : flat.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {flat.data() + i * dim, dim}; }
};

inline ProbeInputs make_probe_inputs(const LabeledDataset& ds, std::size_t count,
                                     std::uint64_t seed) {
  ProbeInputs probe;
  probe.dim = ds.input_dim;
  probe.flat.reserve(count * ds.input_dim);
  std::vector<double> lo(ds.input_dim), hi(ds.input_dim);
  for (std::size_t c = 0; c < ds.input_dim; ++c) lo[c] = hi[c] = ds.input(0)[c];
  for (std::size_t j = 1; j < ds.size(); ++j) {
    auto x = ds.input(j);
    for (std::size_t c = 0; c < ds.input_dim; ++c) {
      lo[c] = std::min(lo[c], x[c]);
      hi[c] = std::max(hi[c], x[c]);
    }
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t c = 0; c < ds.input_dim; ++c) probe.flat.push_back(rng.uniform(lo[c], hi[c]));
  return probe;
}

inline double max_forward_drift(const NetworkState& a, const NetworkState& b,
                                const ProbeInputs& probe) {
  std::vector<double> ya, yb, scratch;
  double drift = 0.0;
  for (std::size_t i = 0; i < probe.count(); ++i) {
    forward_into(a, probe.point(i), ya, scratch);
    forward_into(b, probe.point(i), yb, scratch);
    for (std::size_t c = 0; c < ya.size(); ++c) drift = std::max(drift, std::abs(ya[c] - yb[c]));
  }
  return drift;
}

namespace detail {

// Index of the layer that actually consumes layer i's output: the next
// non-dormant layer.
inline std::optional<std::size_t> consumer_of(const NetworkState& net, std::size_t i) {
  for (std::size_t j = i + 1; j < net.layers.size(); ++j)
    if (!net.layers[j].dormant) return j;
  return std::nullopt;
}

}  // namespace detail

// Unmasks `count` neurons of a hidden layer without changing the computed
// function: their incoming weights and bias are exactly 0 (so with P(0)=0 they
// emit 0), while their outgoing weights get small random values so that
// gradient immediately flows back into the fresh incoming weights.
inline GrowthEvent grow_width(NetworkState& net, std::size_t layer_index, std::size_t count,
                              std::uint64_t seed, const ProbeInputs& probe) {
  if (net.layers.empty() || layer_index >= net.layers.size() - 1)
    throw CapacityExhausted("grow_width: only hidden layers can grow");
  Layer& l = net.layers[layer_index];
  if (l.dormant) throw CapacityExhausted("grow_width: layer is dormant");
  if (count == 0) throw InvalidRange("grow_width: count must be >= 1");

  std::vector<std::size_t> fresh;
  for (std::size_t r = 0; r < l.fan_out && fresh.size() < count; ++r)
    if (!l.active[r]) fresh.push_back(r);
  if (fresh.size() < count)
    throw CapacityExhausted("grow_width: not enough masked neurons in layer " +
                            std::to_string(layer_index));

  const auto consumer_idx = detail::consumer_of(net, layer_index);
  if (!consumer_idx) throw CapacityExhausted("grow_width: layer has no live consumer");
  Layer& consumer = net.layers[*consumer_idx];

  NetworkState before;
  if (probe.count() > 0) before = net;

  Rng rng(seed);
  for (std::size_t r : fresh) {
    for (std::size_t c = 0; c < l.fan_in; ++c) l.w(r, c) = 0.0;
    l.bias[r] = 0.0;
    l.active[r] = 1;
    for (std::size_t row = 0; row < consumer.fan_out; ++row)
      if (consumer.active[row]) consumer.w(row, r) = rng.uniform(-0.01, 0.01);
  }

  GrowthEvent event;
  event.kind = GrowthKind::WidthGrow;
  event.layer = layer_index;
  event.count = count;
  event.function_drift = probe.count() > 0 ? max_forward_drift(before, net, probe) : 0.0;
  event.active_params = effective_params(net);
  return event;
}

// Activates the shallowest dormant layer as an exact identity: unit diagonal,
// zero bias, PRelu slope 1 (so P(x) = x at the moment of activation).
inline GrowthEvent grow_depth(NetworkState& net, const ProbeInputs& probe) {
  std::size_t idx = net.layers.size();
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (net.layers[i].dormant) {
      idx = i;
      break;
    }
  if (idx == net.layers.size()) throw CapacityExhausted("grow_depth: no dormant layers left");

  NetworkState before;
  if (probe.count() > 0) before = net;

  Layer& l = net.layers[idx];
  std::fill(l.weights.begin(), l.weights.end(), 0.0);
  for (std::size_t r = 0; r < l.fan_out; ++r) l.w(r, r) = 1.0;
  std::fill(l.bias.begin(), l.bias.end(), 0.0);
  l.activation = Activation::PRelu;
  l.alpha = 1.0;
  std::fill(l.active.begin(), l.active.end(), 1);
  l.dormant = false;

  GrowthEvent event;
  event.kind = GrowthKind::DepthGrow;
  event.layer = idx;
  event.count = 1;
  event.function_drift = probe.count() > 0 ? max_forward_drift(before, net, probe) : 0.0;
  event.active_params = effective_params(net);
  return event;
}

struct PlateauPoint {
  std::size_t epoch = 0;
  double full_batch_loss = 0.0;
  double grad_norm = 0.0;
};

enum class GrowthDecision : std::uint8_t { None, GrowWidth, GrowDepth };

// First hidden layer that still has masked neurons and room under the width
// cap.
inline std::optional<std::size_t> first_growable_layer(const NetworkState& net,
                                                       const GrowthPolicy& policy) {
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.dormant) continue;
    const std::size_t active = l.active_count();
    if (active < l.fan_out && active < policy.max_active_width) return i;
  }
  return std::nullopt;
}

inline std::size_t active_depth(const NetworkState& net) {
  std::size_t d = 0;
  for (const Layer& l : net.layers) d += l.dormant ? 0 : 1;
  return d;
}

// Plateau test: growth is signalled when the gradient norm or the relative
// loss improvement over the window falls below its threshold, while the
// validation loss still exceeds the target.  Width grows first; depth only
// once every growable layer is at its cap.
inline GrowthDecision detect_plateau(std::span<const PlateauPoint> history,
                                     const GrowthPolicy& policy, double val_loss,
                                     const NetworkState& net) {
  if (history.size() < policy.window || policy.window == 0) return GrowthDecision::None;
  if (!(val_loss > policy.target_val_loss)) return GrowthDecision::None;

  const PlateauPoint& first = history[history.size() - policy.window];
  const PlateauPoint& last = history.back();
  const double rel_improve =
      first.full_batch_loss > 0.0
          ? (first.full_batch_loss - last.full_batch_loss) / first.full_batch_loss
          : 0.0;
  const bool plateau =
      last.grad_norm < policy.grad_threshold || rel_improve < policy.rel_improve_threshold;
  if (!plateau) return GrowthDecision::None;

  if (first_growable_layer(net, policy)) return GrowthDecision::GrowWidth;
  bool has_dormant = false;
  for (const Layer& l : net.layers) has_dormant |= l.dormant;
  if (has_dormant && active_depth(net) < policy.max_active_depth) return GrowthDecision::GrowDepth;
  return GrowthDecision::None;
}

// Consecutive-epoch counters backing the prune patience rule.
struct PruneTracker {
  std::vector<std::vector<std::uint32_t>> below;  // per layer, per neuron

  void ensure_shape(const NetworkState& net) {
    if (below.size() == net.layers.size()) return;
    below.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i)
      below[i].assign(net.layers[i].fan_out, 0);
  }
};

namespace detail {

// Upper bound on how much zeroing one neuron's outgoing column (l1 norm under
// `threshold`) can move the network output: threshold, times the largest
// activation the neuron showed on the probe set, times the Lipschitz bound of
// everything downstream of the consumer's input.
inline double prune_drift_bound(const NetworkState& net, std::size_t layer_index,
                                std::size_t neuron, double threshold,
                                const ProbeInputs& probe) {
  double max_abs = 0.0;
  std::vector<double> z, scratch;
  for (std::size_t p = 0; p < probe.count(); ++p) {
    std::span<const double> x = probe.point(p);
    z.assign(x.begin(), x.end());
    for (std::size_t i = 0; i <= layer_index; ++i) {
      const Layer& l = net.layers[i];
      if (l.dormant) continue;
      scratch.assign(l.fan_out, 0.0);
      for (std::size_t r = 0; r < l.fan_out; ++r) {
        if (!l.active[r]) continue;
        const double* wrow = l.weights.data() + r * l.fan_in;
        double acc = 0.0;
        for (std::size_t c = 0; c < l.fan_in; ++c) acc += wrow[c] * z[c];
        acc += l.bias[r];
        scratch[r] = activate(l, acc);
      }
      z.swap(scratch);
    }
    max_abs = std::max(max_abs, std::abs(z[neuron]));
  }

  const std::size_t consumer_idx = *consumer_of(net, layer_index);
  double lip = std::max(1.0, std::abs(net.layers[consumer_idx].alpha));
  for (std::size_t j = consumer_idx + 1; j < net.layers.size(); ++j) {
    const Layer& l = net.layers[j];
    if (l.dormant) continue;
    double op_norm = 0.0;
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      if (!l.active[r]) continue;
      double row_l1 = 0.0;
      for (std::size_t c = 0; c < l.fan_in; ++c) row_l1 += std::abs(l.w(r, c));
      op_norm = std::max(op_norm, row_l1);
    }
    lip *= op_norm * std::max(1.0, std::abs(l.alpha));
  }
  return threshold * max_abs * lip;
}

}  // namespace detail

// Masks out every active hidden neuron whose outgoing l1 norm stayed under
// prune_threshold for prune_patience consecutive epochs, zeroing its incoming
// and outgoing weights.
inline std::vector<GrowthEvent> prune(NetworkState& net, const GrowthPolicy& policy,
                                      PruneTracker& tracker, const ProbeInputs& probe) {
  tracker.ensure_shape(net);
  std::vector<GrowthEvent> events;
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    Layer& l = net.layers[i];
    if (l.dormant) continue;
    const auto consumer_idx = detail::consumer_of(net, i);
    if (!consumer_idx) continue;
    Layer& consumer = net.layers[*consumer_idx];
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      if (!l.active[r]) {
        tracker.below[i][r] = 0;
        continue;
      }
      double out_l1 = 0.0;
      for (std::size_t row = 0; row < consumer.fan_out; ++row)
        if (consumer.active[row]) out_l1 += std::abs(consumer.w(row, r));
      if (!(out_l1 < policy.prune_threshold)) {
        tracker.below[i][r] = 0;
        continue;
      }
      tracker.below[i][r] += 1;
      if (tracker.below[i][r] < policy.prune_patience) continue;

      const double bound = detail::prune_drift_bound(net, i, r, policy.prune_threshold, probe);
      NetworkState before;
      if (probe.count() > 0) before = net;
      for (std::size_t c = 0; c < l.fan_in; ++c) l.w(r, c) = 0.0;
      l.bias[r] = 0.0;
      l.active[r] = 0;
      for (std::size_t row = 0; row < consumer.fan_out; ++row) consumer.w(row, r) = 0.0;
      tracker.below[i][r] = 0;

      GrowthEvent event;
      event.kind = GrowthKind::Prune;
      event.layer = i;
      event.count = r;
      event.function_drift = probe.count() > 0 ? max_forward_drift(before, net, probe) : 0.0;
      event.drift_bound = bound;
      event.active_params = effective_params(net);
      events.push_back(event);
    }
  }
  return events;
}

// Seed architecture for adaptive training: `active_hidden` live hidden layers
// of physical width `width` (only `initial_active_width` neurons unmasked),
// followed by `reserve_depth` dormant square layers, then a linear readout.
inline NetworkState make_adaptive_seed(std::size_t input_dim, std::size_t output_dim,
                                       std::size_t width, std::size_t initial_active_width,
                                       std::size_t active_hidden, std::size_t reserve_depth,
                                       Activation activation, double alpha, std::uint64_t seed) {
  if (width == 0 || initial_active_width == 0 || initial_active_width > width)
    throw InvalidRange("make_adaptive_seed: bad width configuration");
  if (active_hidden == 0) throw InvalidRange("make_adaptive_seed: need at least one live layer");

  std::vector<std::size_t> hidden(active_hidden + reserve_depth, width);
  NetworkState net = make_dense_network(input_dim, hidden, output_dim, activation, alpha);
  for (std::size_t i = 0; i < active_hidden + reserve_depth; ++i) {
    Layer& l = net.layers[i];
    if (i < active_hidden) {
      for (std::size_t r = initial_active_width; r < width; ++r) l.active[r] = 0;
    } else {
      l.dormant = true;
      std::fill(l.active.begin(), l.active.end(), 0);
    }
  }
  init_weights(net, seed);
  return net;
}

struct AdaptiveResult {
  std::vector<TrainLogRow> training_log;
  std::vector<GrowthEvent> growth_log;
};

// Adaptive training: each epoch optimizes, then consults the plateau test and
// applies at most one growth switch, then prunes.  Gradients are only ever
// taken over the live sub-network.
inline AdaptiveResult train_adaptive(NetworkState& net, const LabeledDataset& train_ds,
                                     const LabeledDataset& val_ds, const GrowthPolicy& policy,
                                     const TrainConfig& cfg) {
  AdaptiveResult result;
  OptimizerState opt_state;
  Rng shuffle_rng = Rng(cfg.seed).fork(0xba7c5);
  Rng grow_rng = Rng(cfg.seed).fork(0x9608);
  const ProbeInputs probe = make_probe_inputs(train_ds, 1000, Rng(cfg.seed).fork(0x9806e).seed());
  PruneTracker tracker;
  std::vector<PlateauPoint> history;
  history.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::run_training_epoch(net, train_ds, cfg, opt_state, shuffle_rng);

    GradientRecord grads = backprop(net, train_ds, cfg.loss);
    const double val_loss = val_ds.size() > 0 ? batch_loss(net, val_ds, cfg.loss) : grads.loss;
    TrainLogRow row;
    row.epoch = epoch;
    row.train_loss = grads.loss;
    row.val_loss = val_loss;
    row.grad_norm = grad_l2_norm(grads);
    row.active_params = effective_params(net);
    result.training_log.push_back(row);
    history.push_back({epoch, grads.loss, row.grad_norm});

    const GrowthDecision decision = detect_plateau(history, policy, val_loss, net);
    if (decision != GrowthDecision::None) {
      GrowthEvent event;
      if (decision == GrowthDecision::GrowWidth) {
        const std::size_t layer = *first_growable_layer(net, policy);
        const Layer& l = net.layers[layer];
        const std::size_t room =
            std::min(l.fan_out - l.active_count(), policy.max_active_width - l.active_count());
        const std::size_t count = std::min(policy.width_step, room);
        event = grow_width(net, layer, count, grow_rng.next_u64(), probe);
      } else {
        event = grow_depth(net, probe);
      }
      event.epoch = epoch;
      event.pre_loss = grads.loss;
      event.post_loss = batch_loss(net, train_ds, cfg.loss);
      result.growth_log.push_back(event);
    }

    if (policy.prune_threshold > 0.0) {
      const double pre = batch_loss(net, train_ds, cfg.loss);
      std::vector<GrowthEvent> pruned = prune(net, policy, tracker, probe);
      if (!pruned.empty()) {
        const double post = batch_loss(net, train_ds, cfg.loss);
        for (GrowthEvent& e : pruned) {
          e.epoch = epoch;
          e.pre_loss = pre;
          e.post_loss = post;
          result.growth_log.push_back(e);
        }
      }
    }
  }
  return result;
}

}  // namespace mnl
