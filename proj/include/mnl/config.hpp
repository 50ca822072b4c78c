#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mnl/errors.hpp"
#include "mnl/network.hpp"
#include "mnl/numio.hpp"
#include "mnl/optimizer.hpp"

namespace mnl {

// Run configuration: sectioned `key = value` text, `#` comments, strict keys.
// Every key has the default shown here; unknown sections or keys are errors.
struct RunConfig {
  struct Data {
    std::string path;         // dataset CSV for validate/train/fit-simple
    std::string signal_path;  // signal CSV for fit-ap
    double quant_tol = 0.0;
    double epsilon = 1e-6;
    double validation_fraction = 0.2;
    std::uint64_t seed = 1;
    bool operator==(const Data&) const = default;
  } data;

  struct Net {
    std::vector<std::size_t> layers = {32, 32};
    Activation activation = Activation::LeakyRelu;
    double alpha = 0.01;
    bool operator==(const Net&) const = default;
  } net;

  struct Train {
    std::string mode = "fixed";  // fixed | adaptive
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 0;
    int loss_p = 2;
    std::string reduction = "mean";  // mean | sum
    bool monotone = false;
    double monotone_initial_rate = 0.5;
    double monotone_backtrack = 0.5;
    std::size_t monotone_max_backtracks = 30;
    bool operator==(const Train&) const = default;
  } train;

  struct Adaptive {
    double grad_threshold = 1e-4;
    double rel_improve_threshold = 0.02;
    std::size_t window = 8;
    std::size_t width_step = 4;
    double target_val_loss = 1e-4;
    double prune_threshold = 0.0;
    std::size_t prune_patience = 5;
    std::size_t max_active_width = 32;
    std::size_t max_active_depth = 5;
    std::size_t seed_width = 32;
    std::size_t seed_active_width = 8;
    std::size_t seed_active_hidden = 1;
    std::size_t seed_reserve_depth = 2;
    bool operator==(const Adaptive&) const = default;
  } adaptive;

  struct SimpleFn {
    std::size_t max_depth = 8;
    double var_tol = 0.01;
    std::size_t min_count = 2;
    bool operator==(const SimpleFn&) const = default;
  } simplefn;

  struct Ap {
    double eta_max = 2.0;
    double grid_step = 0.0;  // 0 = auto: (2*pi/tau)/8
    double amp_threshold = 0.5;
    bool operator==(const Ap&) const = default;
  } ap;

  struct Bench {
    std::string experiment = "sin_inverse";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    bool record_seconds = false;
    std::size_t n_train = 0;  // 0 = experiment default
    std::size_t epochs = 0;   // 0 = experiment default
    std::size_t depth = 0;    // 0 = experiment default (pathological)
    bool operator==(const Bench&) const = default;
  } bench;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& section, std::string_view key,
                                     const std::string& what) {
  throw ConfigError("[" + section + "]." + std::string(key) + ": " + what);
}

inline double want_double(const std::string& section, std::string_view key,
                          std::string_view value) {
  double v;
  if (!try_parse_double(value, v)) config_fail(section, key, "expected a number");
  return v;
}

inline std::size_t want_size(const std::string& section, std::string_view key,
                             std::string_view value) {
  std::int64_t v;
  if (!try_parse_i64(value, v) || v < 0) config_fail(section, key, "expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline std::uint64_t want_u64(const std::string& section, std::string_view key,
                              std::string_view value) {
  std::int64_t v;
  if (!try_parse_i64(value, v) || v < 0) config_fail(section, key, "expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

inline bool want_bool(const std::string& section, std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  config_fail(section, key, "expected true or false");
}

template <typename T, typename Fn>
std::vector<T> want_list(const std::string& section, std::string_view key,
                         std::string_view value, Fn&& one) {
  std::vector<T> out;
  for (auto item : split(value, ',')) {
    auto t = trim(item);
    if (t.empty()) config_fail(section, key, "empty list element");
    out.push_back(one(section, key, t));
  }
  if (out.empty()) config_fail(section, key, "expected a non-empty list");
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + format_u64(lineno) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "data" && section != "net" && section != "train" && section != "adaptive" &&
          section != "simplefn" && section != "ap" && section != "bench")
        throw ConfigError("line " + format_u64(lineno) + ": unknown section [" + section + "]");
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + format_u64(lineno) + ": expected `key = value`");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + format_u64(lineno) + ": key outside any [section]");
    if (key.empty() || value.empty())
      throw ConfigError("line " + format_u64(lineno) + ": empty key or value");

    using namespace detail;
    if (section == "data") {
      if (key == "path") cfg.data.path = std::string(value);
      else if (key == "signal_path") cfg.data.signal_path = std::string(value);
      else if (key == "quant_tol") {
        cfg.data.quant_tol = want_double(section, key, value);
        if (!(cfg.data.quant_tol >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "epsilon") {
        cfg.data.epsilon = want_double(section, key, value);
        if (!(cfg.data.epsilon > 0.0)) config_fail(section, key, "must be > 0");
      } else if (key == "validation_fraction") {
        cfg.data.validation_fraction = want_double(section, key, value);
        if (!(cfg.data.validation_fraction > 0.0 && cfg.data.validation_fraction < 1.0))
          config_fail(section, key, "must lie in (0, 1)");
      } else if (key == "seed") cfg.data.seed = want_u64(section, key, value);
      else config_fail(section, key, "unknown key");
    } else if (section == "net") {
      if (key == "layers") {
        cfg.net.layers = want_list<std::size_t>(section, key, value, want_size);
        for (std::size_t w : cfg.net.layers)
          if (w == 0) config_fail(section, key, "layer widths must be >= 1");
      } else if (key == "activation") {
        if (value == "leaky_relu") cfg.net.activation = Activation::LeakyRelu;
        else if (value == "prelu") cfg.net.activation = Activation::PRelu;
        else if (value == "identity") cfg.net.activation = Activation::Identity;
        else config_fail(section, key, "expected leaky_relu, prelu or identity");
      } else if (key == "alpha") {
        cfg.net.alpha = want_double(section, key, value);
        if (!(cfg.net.alpha > 0.0 && cfg.net.alpha < 1.0))
          config_fail(section, key, "must lie in (0, 1)");
      } else config_fail(section, key, "unknown key");
    } else if (section == "train") {
      if (key == "mode") {
        if (value != "fixed" && value != "adaptive")
          config_fail(section, key, "expected fixed or adaptive");
        cfg.train.mode = std::string(value);
      } else if (key == "optimizer") {
        if (value == "sgd") cfg.train.optimizer = OptimizerKind::Sgd;
        else if (value == "adam") cfg.train.optimizer = OptimizerKind::Adam;
        else config_fail(section, key, "expected sgd or adam");
      } else if (key == "learning_rate") {
        cfg.train.learning_rate = want_double(section, key, value);
        if (!(cfg.train.learning_rate > 0.0)) config_fail(section, key, "must be > 0");
      } else if (key == "epochs") {
        cfg.train.epochs = want_size(section, key, value);
        if (cfg.train.epochs == 0) config_fail(section, key, "must be >= 1");
      } else if (key == "batch_size") cfg.train.batch_size = want_size(section, key, value);
      else if (key == "loss_p") {
        std::int64_t p;
        if (!try_parse_i64(value, p) || (p != 1 && p != 2))
          config_fail(section, key, "supported values are 1 and 2");
        cfg.train.loss_p = static_cast<int>(p);
      } else if (key == "reduction") {
        if (value != "mean" && value != "sum") config_fail(section, key, "expected mean or sum");
        cfg.train.reduction = std::string(value);
      } else if (key == "monotone") cfg.train.monotone = want_bool(section, key, value);
      else if (key == "monotone_initial_rate") {
        cfg.train.monotone_initial_rate = want_double(section, key, value);
        if (!(cfg.train.monotone_initial_rate > 0.0)) config_fail(section, key, "must be > 0");
      } else if (key == "monotone_backtrack") {
        cfg.train.monotone_backtrack = want_double(section, key, value);
        if (!(cfg.train.monotone_backtrack > 0.0 && cfg.train.monotone_backtrack < 1.0))
          config_fail(section, key, "must lie in (0, 1)");
      } else if (key == "monotone_max_backtracks")
        cfg.train.monotone_max_backtracks = want_size(section, key, value);
      else config_fail(section, key, "unknown key");
    } else if (section == "adaptive") {
      if (key == "grad_threshold") {
        cfg.adaptive.grad_threshold = want_double(section, key, value);
        if (!(cfg.adaptive.grad_threshold >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "rel_improve_threshold") {
        cfg.adaptive.rel_improve_threshold = want_double(section, key, value);
        if (!(cfg.adaptive.rel_improve_threshold >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "window") {
        cfg.adaptive.window = want_size(section, key, value);
        if (cfg.adaptive.window == 0) config_fail(section, key, "must be >= 1");
      } else if (key == "width_step") {
        cfg.adaptive.width_step = want_size(section, key, value);
        if (cfg.adaptive.width_step == 0) config_fail(section, key, "must be >= 1");
      } else if (key == "target_val_loss")
        cfg.adaptive.target_val_loss = want_double(section, key, value);
      else if (key == "prune_threshold") {
        cfg.adaptive.prune_threshold = want_double(section, key, value);
        if (!(cfg.adaptive.prune_threshold >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "prune_patience") {
        cfg.adaptive.prune_patience = want_size(section, key, value);
        if (cfg.adaptive.prune_patience == 0) config_fail(section, key, "must be >= 1");
      } else if (key == "max_active_width") cfg.adaptive.max_active_width = want_size(section, key, value);
      else if (key == "max_active_depth") cfg.adaptive.max_active_depth = want_size(section, key, value);
      else if (key == "seed_width") cfg.adaptive.seed_width = want_size(section, key, value);
      else if (key == "seed_active_width") cfg.adaptive.seed_active_width = want_size(section, key, value);
      else if (key == "seed_active_hidden") cfg.adaptive.seed_active_hidden = want_size(section, key, value);
      else if (key == "seed_reserve_depth") cfg.adaptive.seed_reserve_depth = want_size(section, key, value);
      else config_fail(section, key, "unknown key");
    } else if (section == "simplefn") {
      if (key == "max_depth") cfg.simplefn.max_depth = want_size(section, key, value);
      else if (key == "var_tol") {
        cfg.simplefn.var_tol = want_double(section, key, value);
        if (!(cfg.simplefn.var_tol >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "min_count") {
        cfg.simplefn.min_count = want_size(section, key, value);
        if (cfg.simplefn.min_count == 0) config_fail(section, key, "must be >= 1");
      } else config_fail(section, key, "unknown key");
    } else if (section == "ap") {
      if (key == "eta_max") {
        cfg.ap.eta_max = want_double(section, key, value);
        if (!(cfg.ap.eta_max > 0.0)) config_fail(section, key, "must be > 0");
      } else if (key == "grid_step") {
        cfg.ap.grid_step = want_double(section, key, value);
        if (!(cfg.ap.grid_step >= 0.0)) config_fail(section, key, "must be >= 0");
      } else if (key == "amp_threshold") {
        cfg.ap.amp_threshold = want_double(section, key, value);
        if (!(cfg.ap.amp_threshold > 0.0)) config_fail(section, key, "must be > 0");
      } else config_fail(section, key, "unknown key");
    } else {  // bench
      if (key == "experiment") {
        if (value != "sin_inverse" && value != "pathological" && value != "almost_periodic")
          config_fail(section, key, "expected sin_inverse, pathological or almost_periodic");
        cfg.bench.experiment = std::string(value);
      } else if (key == "seeds")
        cfg.bench.seeds = want_list<std::uint64_t>(section, key, value, want_u64);
      else if (key == "record_seconds") cfg.bench.record_seconds = want_bool(section, key, value);
      else if (key == "n_train") cfg.bench.n_train = want_size(section, key, value);
      else if (key == "epochs") cfg.bench.epochs = want_size(section, key, value);
      else if (key == "depth") cfg.bench.depth = want_size(section, key, value);
      else config_fail(section, key, "unknown key");
    }
  }
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[data]\n";
  if (!cfg.data.path.empty()) out << "path = " << cfg.data.path << "\n";
  if (!cfg.data.signal_path.empty()) out << "signal_path = " << cfg.data.signal_path << "\n";
  out << "quant_tol = " << format_double(cfg.data.quant_tol) << "\n";
  out << "epsilon = " << format_double(cfg.data.epsilon) << "\n";
  out << "validation_fraction = " << format_double(cfg.data.validation_fraction) << "\n";
  out << "seed = " << format_u64(cfg.data.seed) << "\n";

  out << "\n[net]\nlayers = ";
  for (std::size_t i = 0; i < cfg.net.layers.size(); ++i)
    out << (i ? "," : "") << cfg.net.layers[i];
  out << "\nactivation = " << to_string(cfg.net.activation) << "\n";
  out << "alpha = " << format_double(cfg.net.alpha) << "\n";

  out << "\n[train]\nmode = " << cfg.train.mode << "\n";
  out << "optimizer = " << to_string(cfg.train.optimizer) << "\n";
  out << "learning_rate = " << format_double(cfg.train.learning_rate) << "\n";
  out << "epochs = " << format_u64(cfg.train.epochs) << "\n";
  out << "batch_size = " << format_u64(cfg.train.batch_size) << "\n";
  out << "loss_p = " << cfg.train.loss_p << "\n";
  out << "reduction = " << cfg.train.reduction << "\n";
  out << "monotone = " << (cfg.train.monotone ? "true" : "false") << "\n";
  out << "monotone_initial_rate = " << format_double(cfg.train.monotone_initial_rate) << "\n";
  out << "monotone_backtrack = " << format_double(cfg.train.monotone_backtrack) << "\n";
  out << "monotone_max_backtracks = " << format_u64(cfg.train.monotone_max_backtracks) << "\n";

  out << "\n[adaptive]\n";
  out << "grad_threshold = " << format_double(cfg.adaptive.grad_threshold) << "\n";
  out << "rel_improve_threshold = " << format_double(cfg.adaptive.rel_improve_threshold) << "\n";
  out << "window = " << format_u64(cfg.adaptive.window) << "\n";
  out << "width_step = " << format_u64(cfg.adaptive.width_step) << "\n";
  out << "target_val_loss = " << format_double(cfg.adaptive.target_val_loss) << "\n";
  out << "prune_threshold = " << format_double(cfg.adaptive.prune_threshold) << "\n";
  out << "prune_patience = " << format_u64(cfg.adaptive.prune_patience) << "\n";
  out << "max_active_width = " << format_u64(cfg.adaptive.max_active_width) << "\n";
  out << "max_active_depth = " << format_u64(cfg.adaptive.max_active_depth) << "\n";
  out << "seed_width = " << format_u64(cfg.adaptive.seed_width) << "\n";
  out << "seed_active_width = " << format_u64(cfg.adaptive.seed_active_width) << "\n";
  out << "seed_active_hidden = " << format_u64(cfg.adaptive.seed_active_hidden) << "\n";
  out << "seed_reserve_depth = " << format_u64(cfg.adaptive.seed_reserve_depth) << "\n";

  out << "\n[simplefn]\n";
  out << "max_depth = " << format_u64(cfg.simplefn.max_depth) << "\n";
  out << "var_tol = " << format_double(cfg.simplefn.var_tol) << "\n";
  out << "min_count = " << format_u64(cfg.simplefn.min_count) << "\n";

  out << "\n[ap]\n";
  out << "eta_max = " << format_double(cfg.ap.eta_max) << "\n";
  out << "grid_step = " << format_double(cfg.ap.grid_step) << "\n";
  out << "amp_threshold = " << format_double(cfg.ap.amp_threshold) << "\n";

  out << "\n[bench]\n";
  out << "experiment = " << cfg.bench.experiment << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < cfg.bench.seeds.size(); ++i)
    out << (i ? "," : "") << cfg.bench.seeds[i];
  out << "\nrecord_seconds = " << (cfg.bench.record_seconds ? "true" : "false") << "\n";
  out << "n_train = " << format_u64(cfg.bench.n_train) << "\n";
  out << "epochs = " << format_u64(cfg.bench.epochs) << "\n";
  out << "depth = " << format_u64(cfg.bench.depth) << "\n";
  return out.str();
}

}  // namespace mnl
