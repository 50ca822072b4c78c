#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mnl/adaptive.hpp"
#include "mnl/apfourier.hpp"
#include "mnl/bench.hpp"
#include "mnl/config.hpp"
#include "mnl/datagate.hpp"
#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/model_io.hpp"
#include "mnl/network.hpp"
#include "mnl/optimizer.hpp"
#include "mnl/simplefn.hpp"

namespace mnl {

// Exit codes: 0 success, 1 error, 2 dataset fails the function-existence
// check (duplicate inputs with conflicting labels), so pipelines can gate on
// inconsistent data.
enum ExitCode : int { kOk = 0, kError = 1, kNoFunction = 2 };

struct CliOptions {
  RunConfig config;
  std::string out_dir = "mnl_out";
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
};

namespace detail {

inline void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path);
  out << text;
  if (!out) throw IoError("failed while writing: " + path);
}

inline std::uint64_t master_seed(const CliOptions& opt) {
  return opt.seed_override.value_or(opt.config.data.seed);
}

inline LossSpec loss_from_config(const RunConfig& cfg) {
  LossSpec spec;
  spec.p = cfg.train.loss_p;
  spec.reduction = cfg.train.reduction == "sum" ? Reduction::Sum : Reduction::Mean;
  return spec;
}

inline TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed) {
  TrainConfig tc;
  tc.optimizer = cfg.train.optimizer;
  tc.learning_rate = cfg.train.learning_rate;
  tc.epochs = cfg.train.epochs;
  tc.batch_size = cfg.train.batch_size;
  tc.loss = loss_from_config(cfg);
  tc.monotone = cfg.train.monotone;
  tc.monotone_initial_rate = cfg.train.monotone_initial_rate;
  tc.monotone_backtrack = cfg.train.monotone_backtrack;
  tc.monotone_max_backtracks = cfg.train.monotone_max_backtracks;
  tc.seed = seed;
  return tc;
}

inline GrowthPolicy policy_from_config(const RunConfig& cfg) {
  GrowthPolicy p;
  p.grad_threshold = cfg.adaptive.grad_threshold;
  p.rel_improve_threshold = cfg.adaptive.rel_improve_threshold;
  p.window = cfg.adaptive.window;
  p.width_step = cfg.adaptive.width_step;
  p.target_val_loss = cfg.adaptive.target_val_loss;
  p.prune_threshold = cfg.adaptive.prune_threshold;
  p.prune_patience = cfg.adaptive.prune_patience;
  p.max_active_width = cfg.adaptive.max_active_width;
  p.max_active_depth = cfg.adaptive.max_active_depth;
  return p;
}

// Shared head of the dataset pipeline: load, group duplicates, judge
// consistency.
struct GatedData {
  LabeledDataset dataset;
  ConsistencyReport report;
};

inline GatedData load_and_check(const RunConfig& cfg) {
  if (cfg.data.path.empty()) throw ConfigError("[data].path: required for this command");
  GatedData g;
  g.dataset = load_dataset_csv(cfg.data.path);
  auto groups = find_duplicate_groups(g.dataset, cfg.data.quant_tol);
  g.report = check_consistency(g.dataset, std::move(groups), cfg.data.epsilon);
  return g;
}

}  // namespace detail

inline int cmd_validate(const CliOptions& opt) {
  detail::GatedData g = detail::load_and_check(opt.config);
  detail::ensure_out_dir(opt.out_dir);
  std::ostringstream report;
  write_consistency_report_csv(g.report, report);
  detail::write_text_file(opt.out_dir + "/consistency_report.csv", report.str());
  if (!opt.quiet)
    std::cout << "verdict=" << to_string(g.report.verdict) << " groups=" << g.report.groups.size()
              << " conflicts=" << g.report.hard_conflicts.size() << "\n";
  return g.report.verdict == Verdict::NoFunction ? kNoFunction : kOk;
}

inline int cmd_train(const CliOptions& opt) {
  const RunConfig& cfg = opt.config;
  detail::GatedData g = detail::load_and_check(cfg);
  if (g.report.verdict == Verdict::NoFunction) {
    if (!opt.quiet)
      std::cout << "verdict=NoFunction: dataset admits no representing function\n";
    return kNoFunction;
  }
  const LabeledDataset averaged = average_duplicates(g.dataset, g.report.groups);
  const std::uint64_t seed = detail::master_seed(opt);
  const SplitResult parts = split(averaged, cfg.data.validation_fraction, seed);

  detail::ensure_out_dir(opt.out_dir);
  NetworkState net;
  std::vector<TrainLogRow> log;
  if (cfg.train.mode == "adaptive") {
    net = make_adaptive_seed(averaged.input_dim, averaged.label_dim, cfg.adaptive.seed_width,
                             cfg.adaptive.seed_active_width, cfg.adaptive.seed_active_hidden,
                             cfg.adaptive.seed_reserve_depth, cfg.net.activation, cfg.net.alpha,
                             Rng(seed).fork(1).seed());
    AdaptiveResult result = train_adaptive(net, parts.train, parts.validation,
                                           detail::policy_from_config(cfg),
                                           detail::train_config(cfg, Rng(seed).fork(2).seed()));
    log = std::move(result.training_log);
    std::ostringstream growth;
    write_growth_log_csv(result.growth_log, growth);
    detail::write_text_file(opt.out_dir + "/growth_log.csv", growth.str());
  } else {
    net = make_dense_network(averaged.input_dim, cfg.net.layers, averaged.label_dim,
                             cfg.net.activation, cfg.net.alpha);
    init_weights(net, Rng(seed).fork(1).seed());
    log = train(net, parts.train, parts.validation,
                detail::train_config(cfg, Rng(seed).fork(2).seed()));
  }

  std::ostringstream log_csv;
  write_training_log_csv(log, log_csv);
  detail::write_text_file(opt.out_dir + "/training_log.csv", log_csv.str());
  save_network(net, opt.out_dir + "/model.mnl1");
  if (!opt.quiet && !log.empty())
    std::cout << "epochs=" << log.size() << " final_train_loss=" << format_double(log.back().train_loss)
              << " final_val_loss=" << format_double(log.back().val_loss)
              << " active_params=" << effective_params(net) << "\n";
  return kOk;
}

inline int cmd_fit_simple(const CliOptions& opt) {
  const RunConfig& cfg = opt.config;
  detail::GatedData g = detail::load_and_check(cfg);
  if (g.report.verdict == Verdict::NoFunction) {
    if (!opt.quiet)
      std::cout << "verdict=NoFunction: dataset admits no representing function\n";
    return kNoFunction;
  }
  const LabeledDataset averaged = average_duplicates(g.dataset, g.report.groups);
  const PiecewiseConstantModel model =
      fit_simple(averaged, cfg.simplefn.max_depth, cfg.simplefn.var_tol, cfg.simplefn.min_count);
  detail::ensure_out_dir(opt.out_dir);
  save_simple_model(model, opt.out_dir + "/simple_model.txt");
  if (!opt.quiet) {
    std::size_t leaves = 0;
    model.for_each_leaf([&](const PiecewiseConstantModel::Node&) { ++leaves; });
    std::cout << "leaves=" << leaves << " train_mse=" << format_double(model_mse(model, averaged))
              << "\n";
  }
  return kOk;
}

inline int cmd_fit_ap(const CliOptions& opt) {
  const RunConfig& cfg = opt.config;
  if (cfg.data.signal_path.empty())
    throw ConfigError("[data].signal_path: required for fit-ap");
  std::ifstream in(cfg.data.signal_path);
  if (!in) throw IoError("cannot open signal file: " + cfg.data.signal_path);
  const SampledSignal signal = read_signal_csv(in);

  ScanConfig scan;
  scan.eta_max = cfg.ap.eta_max;
  scan.grid_step = cfg.ap.grid_step > 0.0
                       ? cfg.ap.grid_step
                       : default_scan_config(signal, cfg.ap.eta_max, cfg.ap.amp_threshold).grid_step;
  scan.amp_threshold = cfg.ap.amp_threshold;

  const TrigPolynomialModel model = fit_ap(signal, scan);
  detail::ensure_out_dir(opt.out_dir);
  save_trig_model(model, opt.out_dir + "/ap_model.csv");
  if (!opt.quiet) {
    std::cout << "terms=" << model.terms.size()
              << " residual=" << format_double(model.residual_norm) << "\n";
    for (const TrigTerm& t : model.terms)
      std::cout << "  eta=" << format_double(t.eta) << " |a|=" << format_double(std::abs(t.coeff))
                << "\n";
  }
  return kOk;
}

inline int cmd_bench(const CliOptions& opt) {
  const RunConfig& cfg = opt.config;
  std::vector<std::uint64_t> seeds = cfg.bench.seeds;
  if (opt.seed_override) seeds = {*opt.seed_override};

  ExperimentReport report;
  if (cfg.bench.experiment == "sin_inverse") {
    SinInverseConfig sc;
    if (cfg.bench.n_train > 0) sc.n_train = cfg.bench.n_train;
    if (cfg.bench.epochs > 0) sc.epochs = cfg.bench.epochs;
    sc.record_seconds = cfg.bench.record_seconds;
    sc.seed = seeds.front();
    report = run_sin_inverse_experiment(sc);
  } else if (cfg.bench.experiment == "pathological") {
    PathologicalConfig pc;
    if (cfg.bench.n_train > 0) pc.n_train = cfg.bench.n_train;
    if (cfg.bench.epochs > 0) pc.epochs = cfg.bench.epochs;
    if (cfg.bench.depth > 0) pc.depth = cfg.bench.depth;
    pc.seeds = seeds;
    pc.record_seconds = cfg.bench.record_seconds;
    report = run_pathological_experiment(pc);
  } else if (cfg.bench.experiment == "almost_periodic") {
    ApExperimentConfig ac;
    ac.foil_seeds = seeds;
    if (cfg.bench.epochs > 0) ac.foil_epochs = cfg.bench.epochs;
    ac.record_seconds = cfg.bench.record_seconds;
    report = run_ap_experiment(ac);
  } else {
    throw ConfigError("[bench].experiment: unknown experiment '" + cfg.bench.experiment + "'");
  }

  emit_report(report, opt.out_dir);
  if (!opt.quiet) {
    std::cout << "experiment=" << report.experiment << " methods=" << report.rows.size() << "\n";
    for (const MethodResult& r : report.rows)
      std::cout << "  " << r.method << " seed=" << r.seed
                << " train_mse=" << format_double(r.train_mse)
                << " eval_mse=" << format_double(r.eval_mse_challenge) << "\n";
  }
  return kOk;
}

inline int dispatch(const CliOptions& opt, const std::string& command) {
  if (command == "validate") return cmd_validate(opt);
  if (command == "train") return cmd_train(opt);
  if (command == "fit-simple") return cmd_fit_simple(opt);
  if (command == "fit-ap") return cmd_fit_ap(opt);
  if (command == "bench") return cmd_bench(opt);
  throw ConfigError("unknown command: " + command);
}

inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"mnl: function approximation lab (dense nets, adaptive growth, "
               "lookup tables, almost-periodic spectra)"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "mnl_out";
  std::int64_t seed = -1;
  bool quiet = false;
  app.add_option("--config", config_path, "path to the run configuration file");
  app.add_option("--out", out_dir, "output directory (default mnl_out)");
  app.add_option("--seed", seed, "override the configured master seed");
  app.add_flag("--quiet", quiet, "suppress progress output");

  for (const char* name : {"validate", "train", "fit-simple", "fit-ap", "bench"})
    app.add_subcommand(name)->fallthrough();

  // CLI11 wants argv-style input reversed.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    CliOptions opt;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config file: " + config_path);
      std::stringstream buf;
      buf << in.rdbuf();
      opt.config = parse_config(buf.str());
    }
    opt.out_dir = out_dir;
    if (seed >= 0) opt.seed_override = static_cast<std::uint64_t>(seed);
    opt.quiet = quiet;
    return dispatch(opt, app.get_subcommands().front()->get_name());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace mnl
