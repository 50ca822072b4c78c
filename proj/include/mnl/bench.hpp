#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mnl/adaptive.hpp"
#include "mnl/apfourier.hpp"
#include "mnl/datagate.hpp"
#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/network.hpp"
#include "mnl/numio.hpp"
#include "mnl/optimizer.hpp"
#include "mnl/rng.hpp"
#include "mnl/simplefn.hpp"

namespace mnl {

// One approximator's scores on one experiment.  eval_mse_challenge is the
// experiment's primary evaluation region, eval_mse_far its secondary one;
// eval_mse_near is kept in memory for region-ordering checks but is not a
// report column.
struct MethodResult {
  std::string method;
  std::string config_digest;
  double train_mse = 0.0;
  double eval_mse_challenge = 0.0;
  double eval_mse_far = 0.0;
  double eval_mse_near = 0.0;
  std::size_t params = 0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

struct PredictionCurve {
  std::string name;  // file stem: <name>_curve.csv
  std::vector<double> x, y_true, y_pred;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<MethodResult> rows;  // sorted by (method, seed)
  std::vector<PredictionCurve> curves;
  // Wall-clock seconds vary run to run, so the CSV writes 0 unless this is
  // set; replay determinism of emitted reports is the default contract.
  bool record_seconds = false;
};

inline void sort_report(ExperimentReport& report) {
  std::sort(report.rows.begin(), report.rows.end(),
            [](const MethodResult& a, const MethodResult& b) {
              return a.method != b.method ? a.method < b.method : a.seed < b.seed;
            });
  std::sort(report.curves.begin(), report.curves.end(),
            [](const PredictionCurve& a, const PredictionCurve& b) { return a.name < b.name; });
}

// ---- generic evaluation helpers -------------------------------------------

using Predictor = std::function<std::vector<double>(std::span<const double>)>;

inline double predictor_mse(const Predictor& predict, const LabeledDataset& ds) {
  double acc = 0.0;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const std::vector<double> pred = predict(ds.input(j));
    auto y = ds.label(j);
    for (std::size_t c = 0; c < ds.label_dim; ++c) {
      const double d = pred[c] - y[c];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(ds.size());
}

inline PredictionCurve make_curve(const std::string& name, const std::vector<double>& grid,
                                  const std::function<double(double)>& truth,
                                  const Predictor& predict) {
  PredictionCurve curve;
  curve.name = name;
  for (double x : grid) {
    curve.x.push_back(x);
    curve.y_true.push_back(truth(x));
    curve.y_pred.push_back(predict(std::span<const double>(&x, 1))[0]);
  }
  return curve;
}

inline std::string digest_config(const std::string& canonical) {
  return hex_digest(fnv1a(canonical));
}

// ---- sin(1/x) --------------------------------------------------------------

// n samples uniform on the open interval (lo, hi), labelled sin(1/x).
inline LabeledDataset sample_sin_inverse(std::size_t n, double lo, double hi,
                                         std::uint64_t seed) {
  if (!(0.0 < lo) || !(lo < hi)) throw InvalidRange("sample_sin_inverse: need 0 < lo < hi");
  if (n == 0) throw InvalidRange("sample_sin_inverse: need n >= 1");
  LabeledDataset ds;
  ds.input_dim = 1;
  ds.label_dim = 1;
  Rng rng(seed);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = rng.uniform(lo, hi);
    ds.inputs.push_back(x);
    ds.labels.push_back(std::sin(1.0 / x));
  }
  return ds;
}

struct SinInverseConfig {
  std::size_t n_train = 10000;
  double train_lo = 0.001;
  double train_hi = 0.011;
  double validation_fraction = 0.2;
  std::size_t n_eval = 1000;
  double challenge_lo = 0.0;  // effective lower bound is open: samples stay > 0
  double challenge_hi = 0.01;
  double far_lo = 0.002;
  double far_hi = 0.01;
  double near_lo = 0.0;
  double near_hi = 0.001;
  std::size_t epochs = 120;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t simple_max_depth = 10;
  double simple_var_tol = 0.01;
  std::size_t simple_min_count = 2;
  double radius = 0.002;
  std::uint64_t seed = 1;
  bool record_seconds = false;
};

namespace detail {

inline Predictor net_predictor(const NetworkState& net) {
  return [&net](std::span<const double> x) { return forward(net, x); };
}

inline Predictor radius_predictor(const LabeledDataset& train, double r) {
  return [&train, r](std::span<const double> x) {
    double radius = r;
    for (int attempt = 0; attempt < 12; ++attempt) {
      try {
        return radius_average_predict(train, x, radius);
      } catch (const EmptyNeighborhood&) {
        radius *= 2.0;  // widen until someone is in range
      }
    }
    return radius_average_predict(train, x, radius);
  };
}

class Stopwatch {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

inline ExperimentReport run_sin_inverse_experiment(const SinInverseConfig& cfg) {
  ExperimentReport report;
  report.experiment = "sin_inverse";
  report.record_seconds = cfg.record_seconds;

  Rng root(cfg.seed);
  const LabeledDataset full =
      sample_sin_inverse(cfg.n_train, cfg.train_lo, cfg.train_hi, root.fork(1).seed());
  const SplitResult parts = split(full, cfg.validation_fraction, root.fork(2).seed());
  const LabeledDataset challenge =
      sample_sin_inverse(cfg.n_eval, std::max(cfg.challenge_lo, 1e-12), cfg.challenge_hi,
                         root.fork(3).seed());
  const LabeledDataset far =
      sample_sin_inverse(cfg.n_eval, cfg.far_lo, cfg.far_hi, root.fork(4).seed());
  const LabeledDataset near =
      sample_sin_inverse(cfg.n_eval, std::max(cfg.near_lo, 1e-12), cfg.near_hi,
                         root.fork(5).seed());

  std::vector<double> curve_grid;
  for (std::size_t i = 0; i <= 2000; ++i)
    curve_grid.push_back(2e-4 + static_cast<double>(i) * (cfg.train_hi - 2e-4) / 2000.0);
  const auto truth = [](double x) { return std::sin(1.0 / x); };

  auto add_row = [&](const std::string& method, const std::string& canonical,
                     const Predictor& predict, std::size_t params, double seconds) {
    MethodResult row;
    row.method = method;
    row.config_digest = digest_config(canonical);
    row.train_mse = predictor_mse(predict, parts.train);
    row.eval_mse_challenge = predictor_mse(predict, challenge);
    row.eval_mse_far = predictor_mse(predict, far);
    row.eval_mse_near = predictor_mse(predict, near);
    row.params = params;
    row.seconds = seconds;
    row.seed = cfg.seed;
    report.rows.push_back(row);
    report.curves.push_back(make_curve(method, curve_grid, truth, predict));
  };

  TrainConfig tc;
  tc.optimizer = OptimizerKind::Adam;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;

  {
    detail::Stopwatch watch;
    NetworkState net = make_dense_network(1, {64, 64, 64, 64}, 1, Activation::LeakyRelu, 0.01);
    init_weights(net, root.fork(10).seed());
    tc.seed = root.fork(11).seed();
    train(net, parts.train, parts.validation, tc);
    add_row("net_4x64", "net=4x64;epochs=" + format_u64(cfg.epochs), detail::net_predictor(net),
            effective_params(net), watch.elapsed());
  }
  {
    detail::Stopwatch watch;
    NetworkState net = make_dense_network(1, {32, 32, 32, 32, 32, 32, 32, 32}, 1,
                                          Activation::LeakyRelu, 0.01);
    init_weights(net, root.fork(12).seed());
    tc.seed = root.fork(13).seed();
    train(net, parts.train, parts.validation, tc);
    add_row("net_8x32", "net=8x32;epochs=" + format_u64(cfg.epochs), detail::net_predictor(net),
            effective_params(net), watch.elapsed());
  }
  {
    detail::Stopwatch watch;
    NetworkState net = make_adaptive_seed(1, 1, 32, 8, 2, 2, Activation::LeakyRelu, 0.01,
                                          root.fork(14).seed());
    GrowthPolicy policy;
    policy.grad_threshold = 1e-4;
    policy.rel_improve_threshold = 0.02;
    policy.window = 8;
    policy.width_step = 8;
    policy.target_val_loss = 1e-4;
    policy.max_active_width = 32;
    policy.max_active_depth = 5;
    TrainConfig atc = tc;
    atc.seed = root.fork(15).seed();
    train_adaptive(net, parts.train, parts.validation, policy, atc);
    add_row("net_adaptive", "net=adaptive;epochs=" + format_u64(cfg.epochs),
            detail::net_predictor(net), effective_params(net), watch.elapsed());
  }
  {
    detail::Stopwatch watch;
    const PiecewiseConstantModel model =
        fit_simple(parts.train, cfg.simple_max_depth, cfg.simple_var_tol, cfg.simple_min_count);
    std::size_t leaves = 0;
    model.for_each_leaf([&](const PiecewiseConstantModel::Node&) { ++leaves; });
    add_row("simplefn",
            "simplefn;max_depth=" + format_u64(cfg.simple_max_depth) +
                ";var_tol=" + format_double(cfg.simple_var_tol),
            [&model](std::span<const double> x) { return eval_simple(model, x); },
            leaves * model.label_dim, watch.elapsed());
  }
  {
    detail::Stopwatch watch;
    add_row("radius_avg", "radius_avg;r=" + format_double(cfg.radius),
            detail::radius_predictor(parts.train, cfg.radius),
            parts.train.size() * (parts.train.input_dim + parts.train.label_dim),
            watch.elapsed());
  }

  sort_report(report);
  return report;
}

// ---- pathological indicator ------------------------------------------------

// Parity of the leading `depth` binary digits of x in [0, 1]: 1 when the
// number of 1-bits is even.  Both the set and its complement meet every dyadic
// interval of width 2^-depth and each has measure exactly 1/2, so the labels
// carry no structure a smooth approximator can grab below that scale.
inline int pathological_indicator(double x, std::size_t depth) {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidRange("pathological_indicator: x must be in [0, 1]");
  if (depth < 1 || depth > 52) throw InvalidRange("pathological_indicator: depth must be in [1, 52]");
  int parity = 0;
  for (std::size_t i = 1; i <= depth; ++i) {
    // x * 2^i is exact for x in [0, 1] and i <= 52; x = 1 yields all-zero digits.
    const double scaled = std::floor(std::ldexp(x, static_cast<int>(i)));
    parity ^= static_cast<int>(static_cast<std::uint64_t>(scaled) & 1u);
  }
  return parity == 0 ? 1 : 0;
}

struct PathologicalConfig {
  std::size_t depth = 20;
  std::size_t n_train = 10000;
  std::size_t n_eval = 10000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t simple_max_depth = 12;
  double simple_var_tol = 0.01;
  std::size_t simple_min_count = 2;
  double radius = 0.01;
  bool record_seconds = false;
};

inline LabeledDataset sample_pathological(std::size_t n, std::size_t depth, std::uint64_t seed) {
  LabeledDataset ds;
  ds.input_dim = 1;
  ds.label_dim = 1;
  Rng rng(seed);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = rng.uniform01();
    ds.inputs.push_back(x);
    ds.labels.push_back(static_cast<double>(pathological_indicator(x, depth)));
  }
  return ds;
}

inline ExperimentReport run_pathological_experiment(const PathologicalConfig& cfg) {
  ExperimentReport report;
  report.experiment = "pathological";
  report.record_seconds = cfg.record_seconds;

  const std::string base = "depth=" + format_u64(cfg.depth) + ";n=" + format_u64(cfg.n_train);
  for (std::uint64_t seed : cfg.seeds) {
    Rng root(seed);
    const LabeledDataset train_ds =
        sample_pathological(cfg.n_train, cfg.depth, root.fork(1).seed());
    const LabeledDataset eval_ds = sample_pathological(cfg.n_eval, cfg.depth, root.fork(2).seed());

    auto add_row = [&](const std::string& method, const Predictor& predict, std::size_t params,
                       double seconds) {
      MethodResult row;
      row.method = method;
      row.config_digest = digest_config(base + ";" + method);
      row.train_mse = predictor_mse(predict, train_ds);
      row.eval_mse_challenge = predictor_mse(predict, eval_ds);
      row.eval_mse_far = row.eval_mse_challenge;  // single evaluation region
      row.eval_mse_near = row.eval_mse_challenge;
      row.params = params;
      row.seconds = seconds;
      row.seed = seed;
      report.rows.push_back(row);
    };

    TrainConfig tc;
    tc.optimizer = OptimizerKind::Adam;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;

    {
      detail::Stopwatch watch;
      NetworkState net = make_dense_network(1, {32, 32}, 1, Activation::LeakyRelu, 0.01);
      init_weights(net, root.fork(10).seed());
      tc.seed = root.fork(11).seed();
      train(net, train_ds, LabeledDataset{}, tc);
      add_row("net_2x32", detail::net_predictor(net), effective_params(net), watch.elapsed());
    }
    {
      detail::Stopwatch watch;
      NetworkState net =
          make_adaptive_seed(1, 1, 32, 8, 1, 1, Activation::LeakyRelu, 0.01, root.fork(12).seed());
      GrowthPolicy policy;
      policy.grad_threshold = 1e-4;
      policy.rel_improve_threshold = 0.02;
      policy.window = 6;
      policy.width_step = 8;
      policy.target_val_loss = 1e-4;
      policy.max_active_width = 32;
      policy.max_active_depth = 4;
      TrainConfig atc = tc;
      atc.seed = root.fork(13).seed();
      train_adaptive(net, train_ds, LabeledDataset{}, policy, atc);
      add_row("net_adaptive", detail::net_predictor(net), effective_params(net), watch.elapsed());
    }
    {
      detail::Stopwatch watch;
      const PiecewiseConstantModel model =
          fit_simple(train_ds, cfg.simple_max_depth, cfg.simple_var_tol, cfg.simple_min_count);
      std::size_t leaves = 0;
      model.for_each_leaf([&](const PiecewiseConstantModel::Node&) { ++leaves; });
      add_row("simplefn",
              [&model](std::span<const double> x) { return eval_simple(model, x); },
              leaves * model.label_dim, watch.elapsed());
    }
    {
      detail::Stopwatch watch;
      add_row("radius_avg", detail::radius_predictor(train_ds, cfg.radius),
              train_ds.size() * 2, watch.elapsed());
    }
    {
      detail::Stopwatch watch;
      add_row("constant_half",
              [](std::span<const double>) { return std::vector<double>{0.5}; }, 1,
              watch.elapsed());
    }
  }

  sort_report(report);
  return report;
}

// ---- almost-periodic forecasting -------------------------------------------

struct ApExperimentConfig {
  double dx = 0.01;
  double window = 400.0 * 3.14159265358979323846;
  double extrapolation_length = 100.0;
  double eta_max = 2.0;
  double amp_threshold = 0.5;
  std::vector<std::uint64_t> foil_seeds = {1, 2, 3};
  std::size_t foil_subsample = 32;  // train the foil on every k-th sample
  std::size_t foil_epochs = 200;
  std::size_t foil_batch_size = 128;
  double foil_learning_rate = 1e-3;
  bool record_seconds = false;
};

inline Complex ap_example_truth(double x) {
  return std::polar(1.0, x) + std::polar(1.0, std::sqrt(2.0) * x);
}

inline ExperimentReport run_ap_experiment(const ApExperimentConfig& cfg) {
  ExperimentReport report;
  report.experiment = "almost_periodic";
  report.record_seconds = cfg.record_seconds;

  const std::size_t n = static_cast<std::size_t>(cfg.window / cfg.dx);
  const SampledSignal signal = make_signal(0.0, cfg.dx, n, ap_example_truth);
  const double tau = signal.window();

  // Extrapolation grid just past the window.
  const std::size_t n_extra = static_cast<std::size_t>(cfg.extrapolation_length / cfg.dx);
  std::vector<double> extra_x(n_extra);
  for (std::size_t j = 0; j < n_extra; ++j)
    extra_x[j] = tau + static_cast<double>(j) * cfg.dx;

  double fit_extra_mse = 0.0;
  {
    detail::Stopwatch watch;
    ScanConfig scan = default_scan_config(signal, cfg.eta_max, cfg.amp_threshold);
    const TrigPolynomialModel model = fit_ap(signal, scan);

    double acc = 0.0;
    for (double x : extra_x) {
      const Complex d = predict_ap(model, x) - ap_example_truth(x);
      acc += d.real() * d.real() + d.imag() * d.imag();
    }
    fit_extra_mse = acc / static_cast<double>(n_extra);

    MethodResult row;
    row.method = "fit_ap";
    row.config_digest =
        digest_config("fit_ap;eta_max=" + format_double(cfg.eta_max) +
                      ";thresh=" + format_double(cfg.amp_threshold));
    row.train_mse = model.residual_norm * model.residual_norm;
    row.eval_mse_challenge = fit_extra_mse;
    row.eval_mse_far = row.train_mse;
    row.eval_mse_near = fit_extra_mse;
    row.params = model.terms.size() * 3;  // eta + complex coefficient per term
    row.seconds = watch.elapsed();
    row.seed = 0;
    report.rows.push_back(row);

    PredictionCurve curve;
    curve.name = "fit_ap";
    for (double x : extra_x) {
      curve.x.push_back(x);
      curve.y_true.push_back(ap_example_truth(x).real());
      curve.y_pred.push_back(predict_ap(model, x).real());
    }
    report.curves.push_back(std::move(curve));
  }

  // Gradient-descent foil: a plain feed-forward net on raw (x, value) pairs.
  LabeledDataset foil_train;
  foil_train.input_dim = 1;
  foil_train.label_dim = 2;
  for (std::size_t j = 0; j < signal.size(); j += cfg.foil_subsample) {
    foil_train.inputs.push_back(signal.x_at(j));
    foil_train.labels.push_back(signal.values[j].real());
    foil_train.labels.push_back(signal.values[j].imag());
  }
  LabeledDataset foil_eval;
  foil_eval.input_dim = 1;
  foil_eval.label_dim = 2;
  for (double x : extra_x) {
    const Complex v = ap_example_truth(x);
    foil_eval.inputs.push_back(x);
    foil_eval.labels.push_back(v.real());
    foil_eval.labels.push_back(v.imag());
  }

  for (std::uint64_t seed : cfg.foil_seeds) {
    detail::Stopwatch watch;
    Rng root(seed);
    NetworkState net = make_dense_network(1, {32, 32}, 2, Activation::LeakyRelu, 0.01);
    init_weights(net, root.fork(1).seed());
    TrainConfig tc;
    tc.optimizer = OptimizerKind::Adam;
    tc.learning_rate = cfg.foil_learning_rate;
    tc.epochs = cfg.foil_epochs;
    tc.batch_size = cfg.foil_batch_size;
    tc.seed = root.fork(2).seed();
    train(net, foil_train, LabeledDataset{}, tc);

    MethodResult row;
    row.method = "ffnet";
    row.config_digest = digest_config("ffnet;epochs=" + format_u64(cfg.foil_epochs));
    row.train_mse = batch_loss(net, foil_train, LossSpec{});
    row.eval_mse_challenge = batch_loss(net, foil_eval, LossSpec{});
    row.eval_mse_far = row.train_mse;
    row.eval_mse_near = row.eval_mse_challenge;
    row.params = effective_params(net);
    row.seconds = watch.elapsed();
    row.seed = seed;
    report.rows.push_back(row);
  }

  sort_report(report);
  return report;
}

// ---- report I/O -------------------------------------------------------------

inline void write_report_csv(const ExperimentReport& report, std::ostream& out) {
  out << "experiment,method,config_digest,train_mse,eval_mse_challenge,eval_mse_far,params,"
         "seconds,seed\n";
  for (const MethodResult& r : report.rows) {
    out << report.experiment << "," << r.method << "," << r.config_digest << ","
        << format_double(r.train_mse) << "," << format_double(r.eval_mse_challenge) << ","
        << format_double(r.eval_mse_far) << "," << format_u64(r.params) << ","
        << format_double(report.record_seconds ? r.seconds : 0.0) << "," << format_u64(r.seed)
        << "\n";
  }
}

// Writes `report.csv` plus one `<name>_curve.csv` (`x,y_true,y_pred`) per
// stored curve into the directory `dir`.
inline void emit_report(const ExperimentReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);

  const std::string report_path = dir + "/report.csv";
  std::ofstream out(report_path);
  if (!out) throw IoError("cannot write report: " + report_path);
  write_report_csv(report, out);
  if (!out) throw IoError("failed while writing report: " + report_path);

  for (const PredictionCurve& curve : report.curves) {
    const std::string path = dir + "/" + curve.name + "_curve.csv";
    std::ofstream cout_(path);
    if (!cout_) throw IoError("cannot write curve file: " + path);
    cout_ << "x,y_true,y_pred\n";
    for (std::size_t i = 0; i < curve.x.size(); ++i)
      cout_ << format_double(curve.x[i]) << "," << format_double(curve.y_true[i]) << ","
            << format_double(curve.y_pred[i]) << "\n";
    if (!cout_) throw IoError("failed while writing curve file: " + path);
  }
}

// Parses a report.csv back into rows; the in-memory-only fields (near-region
// MSE, curves) are not part of the file format.
inline ExperimentReport parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) !=
          "experiment,method,config_digest,train_mse,eval_mse_challenge,eval_mse_far,params,"
          "seconds,seed")
    throw FormatError("report CSV: unexpected header");
  ExperimentReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto cells = split(t, ',');
    if (cells.size() != 9)
      throw FormatError("report CSV line " + format_u64(lineno) + ": wrong field count");
    MethodResult r;
    report.experiment = std::string(trim(cells[0]));
    r.method = std::string(trim(cells[1]));
    r.config_digest = std::string(trim(cells[2]));
    std::int64_t iv = 0;
    if (!try_parse_double(trim(cells[3]), r.train_mse) ||
        !try_parse_double(trim(cells[4]), r.eval_mse_challenge) ||
        !try_parse_double(trim(cells[5]), r.eval_mse_far) ||
        !try_parse_i64(trim(cells[6]), iv))
      throw FormatError("report CSV line " + format_u64(lineno) + ": malformed number");
    r.params = static_cast<std::size_t>(iv);
    if (!try_parse_double(trim(cells[7]), r.seconds) || !try_parse_i64(trim(cells[8]), iv))
      throw FormatError("report CSV line " + format_u64(lineno) + ": malformed number");
    r.seed = static_cast<std::uint64_t>(iv);
    report.rows.push_back(std::move(r));
  }
  return report;
}

}  // namespace mnl
