#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sten/checkpoint.hpp"
#include "sten/epochs.hpp"
#include "sten/gradcheck.hpp"
#include "sten/metrics.hpp"
#include "sten/model.hpp"
#include "sten/synth.hpp"
#include "sten/train.hpp"

namespace sten::cli {

// Verbosity from SEN_LOG: 0 quiet, 1 progress (default), 2 per-epoch detail.
inline int log_level() {
  const char* env = std::getenv("SEN_LOG");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env) return 1;
  return static_cast<int>(v);
}

// Union of the architecture, training and pipeline settings. Every field has
// a documented default; the config file may set any key below, and
// command-line flags win over the file. Seeds derive from `seed`: the
// subject split uses seed, model init seed+1, the training loop seed+2.
struct RunConfig {
  // pipeline paths
  std::string data;   // input epoch file (train/eval) or synth output
  std::string out;    // output directory (train) or metrics path (eval)
  std::string model;  // checkpoint path (eval)
  uint64_t seed{0};
  double test_fraction{0.2};   // share of subjects held out for test
  double val_fraction{0.125};  // share of the remaining subjects for validation

  // synthetic generator geometry
  int64_t subjects{40};
  int64_t trials_per_subject{12};
  int64_t n_channels{128};
  int64_t n_samples{875};
  double rate{125.0};

  // architecture (training derives n_channels/n_samples from the data file)
  int64_t temporal_filters{8};
  int64_t depth_multiplier{2};
  int64_t separable_filters{16};
  int64_t temporal_kernel{64};
  int64_t separable_kernel{16};
  int64_t pool1{4};
  int64_t pool2{8};
  double dropout{0.5};
  int64_t dense_units{64};
  int64_t n_classes{2};
  double maxnorm_depthwise{1.0};  // 0 disables the constraint
  double maxnorm_dense{0.25};     // 0 disables the constraint

  // optimization
  double learning_rate{0.01};
  int epochs{200};
  int patience{35};
  int batch_size{16};

  ArchConfig arch(int64_t channels, int64_t samples) const {
    ArchConfig a;
    a.n_channels = channels;
    a.n_samples = samples;
    a.temporal_filters = temporal_filters;
    a.depth_multiplier = depth_multiplier;
    a.separable_filters = separable_filters;
    a.temporal_kernel = temporal_kernel;
    a.separable_kernel = separable_kernel;
    a.pool1 = pool1;
    a.pool2 = pool2;
    a.dropout_p = static_cast<float>(dropout);
    a.dense_units = dense_units;
    a.n_classes = n_classes;
    a.maxnorm_depthwise = maxnorm_depthwise > 0.0
                              ? std::optional<float>(static_cast<float>(maxnorm_depthwise))
                              : std::nullopt;
    a.maxnorm_dense =
        maxnorm_dense > 0.0 ? std::optional<float>(static_cast<float>(maxnorm_dense)) : std::nullopt;
    return a;
  }

  TrainConfig train(const std::string& checkpoint_path, const std::string& csv_path) const {
    TrainConfig t;
    t.learning_rate = static_cast<float>(learning_rate);
    t.max_epochs = epochs;
    t.patience = patience;
    t.batch_size = batch_size;
    t.seed = seed + 2;
    t.checkpoint_path = checkpoint_path;
    t.csv_log_path = csv_path;
    return t;
  }
};

namespace detail {

struct ConfigKey {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  is >> v;
  if (is.fail() || !is.eof()) {
    throw std::runtime_error("config key '" + key + "' has a malformed value '" + value + "'");
  }
  return v;
}

// Key table shared by the config-file reader and the manifest writer;
// the order here is the manifest order.
inline const std::vector<std::pair<std::string, ConfigKey>>& config_keys() {
  static const std::vector<std::pair<std::string, ConfigKey>> keys = [] {
    std::vector<std::pair<std::string, ConfigKey>> k;
    auto add_string = [&k](const std::string& name, std::string RunConfig::*field) {
      k.push_back({name,
                   {[field](RunConfig& rc, const std::string& v) { rc.*field = v; },
                    [field](const RunConfig& rc) { return rc.*field; }}});
    };
    auto add_u64 = [&k](const std::string& name, uint64_t RunConfig::*field) {
      k.push_back({name,
                   {[field, name](RunConfig& rc, const std::string& v) {
                      rc.*field = parse_number<uint64_t>(name, v);
                    },
                    [field](const RunConfig& rc) { return std::to_string(rc.*field); }}});
    };
    auto add_i64 = [&k](const std::string& name, int64_t RunConfig::*field) {
      k.push_back({name,
                   {[field, name](RunConfig& rc, const std::string& v) {
                      rc.*field = parse_number<int64_t>(name, v);
                    },
                    [field](const RunConfig& rc) { return std::to_string(rc.*field); }}});
    };
    auto add_int = [&k](const std::string& name, int RunConfig::*field) {
      k.push_back({name,
                   {[field, name](RunConfig& rc, const std::string& v) {
                      rc.*field = parse_number<int>(name, v);
                    },
                    [field](const RunConfig& rc) { return std::to_string(rc.*field); }}});
    };
    auto add_double = [&k](const std::string& name, double RunConfig::*field) {
      k.push_back({name,
                   {[field, name](RunConfig& rc, const std::string& v) {
                      rc.*field = parse_number<double>(name, v);
                    },
                    [field](const RunConfig& rc) { return format_double(rc.*field); }}});
    };
    add_string("data", &RunConfig::data);
    add_string("out", &RunConfig::out);
    add_string("model", &RunConfig::model);
    add_u64("seed", &RunConfig::seed);
    add_double("test_fraction", &RunConfig::test_fraction);
    add_double("val_fraction", &RunConfig::val_fraction);
    add_i64("subjects", &RunConfig::subjects);
    add_i64("trials_per_subject", &RunConfig::trials_per_subject);
    add_i64("n_channels", &RunConfig::n_channels);
    add_i64("n_samples", &RunConfig::n_samples);
    add_double("rate", &RunConfig::rate);
    add_i64("temporal_filters", &RunConfig::temporal_filters);
    add_i64("depth_multiplier", &RunConfig::depth_multiplier);
    add_i64("separable_filters", &RunConfig::separable_filters);
    add_i64("temporal_kernel", &RunConfig::temporal_kernel);
    add_i64("separable_kernel", &RunConfig::separable_kernel);
    add_i64("pool1", &RunConfig::pool1);
    add_i64("pool2", &RunConfig::pool2);
    add_double("dropout", &RunConfig::dropout);
    add_i64("dense_units", &RunConfig::dense_units);
    add_i64("n_classes", &RunConfig::n_classes);
    add_double("maxnorm_depthwise", &RunConfig::maxnorm_depthwise);
    add_double("maxnorm_dense", &RunConfig::maxnorm_dense);
    add_double("learning_rate", &RunConfig::learning_rate);
    add_int("epochs", &RunConfig::epochs);
    add_int("patience", &RunConfig::patience);
    add_int("batch_size", &RunConfig::batch_size);
    return k;
  }();
  return keys;
}

}  // namespace detail

// Reads a UTF-8 "key = value" config file ('#' starts a comment); unknown
// keys are rejected.
inline void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config file '" + path + "' line " + std::to_string(lineno) +
                               " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& [name, handlers] : detail::config_keys()) {
      if (name == key) {
        handlers.set(rc, value);
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("config file '" + path + "' has unknown key '" + key + "'");
    }
  }
}

// Writes the fully resolved RunConfig in the config-file format, so any run
// can be reproduced from its manifest alone.
inline void write_manifest(const RunConfig& rc, const std::string& subcommand,
                           const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open manifest '" + path + "' for writing");
  os << "# resolved run configuration (subcommand: " << subcommand << ")\n";
  for (const auto& [name, handlers] : detail::config_keys()) {
    os << name << " = " << handlers.get(rc) << "\n";
  }
}

namespace detail {

inline int run_synth(const RunConfig& rc) {
  if (rc.out.empty()) throw std::runtime_error("synth needs --out for the epoch file");
  EpochSet es = generate_synthetic(rc.subjects, rc.trials_per_subject, rc.n_channels,
                                   rc.n_samples, static_cast<float>(rc.rate), rc.seed);
  save_epochset(es, rc.out);
  save_epoch_manifest(es, rc.out + ".jsonl");
  write_manifest(rc, "synth", rc.out + ".manifest.cfg");
  if (log_level() >= 1) {
    std::cout << "wrote " << es.n_trials() << " trials (" << es.n_channels() << " channels x "
              << es.n_samples() << " samples at " << es.sample_rate_hz << " Hz) to " << rc.out
              << "\n";
  }
  return 0;
}

inline int run_train(const RunConfig& rc) {
  if (rc.data.empty()) throw std::runtime_error("train needs --data");
  if (rc.out.empty()) throw std::runtime_error("train needs --out");
  std::filesystem::create_directories(rc.out);

  EpochSet es = load_epochset(rc.data);
  Rng split_rng(rc.seed);
  LabeledSplit split = split_subject_independent(es, rc.test_fraction, rc.val_fraction, split_rng);
  split.train.epochs = standardize(std::move(split.train.epochs));
  split.val.epochs = standardize(std::move(split.val.epochs));
  split.test.epochs = standardize(std::move(split.test.epochs));
  if (log_level() >= 1) {
    std::cout << "split: " << split.train.epochs.n_trials() << " train / "
              << split.val.epochs.n_trials() << " val / " << split.test.epochs.n_trials()
              << " test trials\n";
  }

  const ArchConfig arch = rc.arch(es.n_channels(), es.n_samples());
  Rng init_rng(rc.seed + 1);
  ModelParams params = build_model(arch, init_rng);
  if (log_level() >= 1) {
    std::cout << "model: " << params.trainable_count() << " trainable parameters\n";
  }

  const std::string checkpoint_path = (std::filesystem::path(rc.out) / "model.sten").string();
  const std::string csv_path = (std::filesystem::path(rc.out) / "history.csv").string();
  const TrainConfig tc = rc.train(checkpoint_path, csv_path);
  const int batch = tc.batch_size;
  auto evaluate = [&split, batch](const ModelParams& p, int epoch) {
    const double loss = eval_loss(p, split.val, batch);
    if (log_level() >= 2) std::cout << "epoch " << epoch << " val_loss " << loss << "\n";
    return loss;
  };
  auto [best, report] = fit_with_evaluator(std::move(params), split.train, tc, evaluate);
  if (log_level() >= 1) {
    std::cout << "stopped at epoch " << report.stopped_epoch << ", best epoch "
              << report.best_epoch << " (val_loss " << report.best_val_loss << ")\n";
  }

  const std::vector<int> predicted = predict_set(best, split.test.epochs, batch);
  const MetricsReport metrics = compute_metrics(predicted, split.test.labels);
  const std::string metrics_json = metrics_to_json(metrics).dump(2) + "\n";
  {
    std::ofstream os(std::filesystem::path(rc.out) / "metrics.json", std::ios::trunc);
    os << metrics_json;
  }
  write_manifest(rc, "train", (std::filesystem::path(rc.out) / "manifest.cfg").string());
  if (log_level() >= 1) std::cout << metrics_json;
  return 0;
}

inline int run_eval(const RunConfig& rc) {
  if (rc.model.empty()) throw std::runtime_error("eval needs --model");
  if (rc.data.empty()) throw std::runtime_error("eval needs --data");
  const ModelParams params = load_checkpoint(rc.model);
  EpochSet es = load_epochset(rc.data);
  const std::vector<int> labels = binarize_valence(es.valence);
  es = standardize(std::move(es));
  const std::vector<int> predicted = predict_set(params, es, rc.batch_size);
  const MetricsReport metrics = compute_metrics(predicted, labels);
  const std::string metrics_json = metrics_to_json(metrics).dump(2) + "\n";
  std::cout << metrics_json;
  if (!rc.out.empty()) {
    std::ofstream os(rc.out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + rc.out + "' for writing");
    os << metrics_json;
    write_manifest(rc, "eval", rc.out + ".manifest.cfg");
  }
  return 0;
}

inline int run_gradcheck(const RunConfig& rc) {
  const auto reports = run_gradcheck_suite(rc.seed);
  bool ok = true;
  for (const auto& r : reports) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-24s max_rel_error %.3e\n", r.name.c_str(),
                  r.max_rel_error);
    std::cout << line;
    ok = ok && r.max_rel_error < 1e-4;
  }
  if (!ok) throw std::runtime_error("gradient check exceeded the 1e-4 tolerance");
  return 0;
}

}  // namespace detail

// Batch command surface. Exit codes: 0 success, 1 usage error, 2 runtime
// error. All randomness is controlled by --seed.
inline int dispatch(int argc, const char* const* argv) {
  RunConfig rc;
  std::string config_path;

  // The config file is applied before flag values so that flags win.
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      config_path = arg.substr(9);
    }
  }
  try {
    if (!config_path.empty()) apply_config_file(rc, config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"subject-independent EEG valence classifier"};
  app.require_subcommand(1);
  std::string config_dummy;

  auto add_common = [&rc, &config_dummy](CLI::App* cmd) {
    cmd->add_option("--seed", rc.seed, "seed for all randomness in this run");
    cmd->add_option("--config", config_dummy, "key = value config file (flags win)");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic epoch set");
  add_common(synth);
  synth->add_option("--out", rc.out, "output epoch file path")->required();
  synth->add_option("--subjects", rc.subjects, "number of subjects");
  synth->add_option("--trials-per-subject", rc.trials_per_subject, "trials per subject");
  synth->add_option("--channels", rc.n_channels, "channels per trial");
  synth->add_option("--samples", rc.n_samples, "samples per trial");
  synth->add_option("--rate", rc.rate, "sample rate in Hz");

  CLI::App* train = app.add_subcommand("train", "train on an epoch file and report test metrics");
  add_common(train);
  train->add_option("--data", rc.data, "input epoch file")->required();
  train->add_option("--out", rc.out, "output directory")->required();
  train->add_option("--test-fraction", rc.test_fraction, "subject share held out for test");
  train->add_option("--val-fraction", rc.val_fraction, "subject share of the remainder for validation");
  train->add_option("--epochs", rc.epochs, "maximum training epochs");
  train->add_option("--lr", rc.learning_rate, "Adam learning rate");
  train->add_option("--batch-size", rc.batch_size, "mini-batch size");
  train->add_option("--patience", rc.patience, "early-stopping patience (epochs)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on an epoch file");
  add_common(eval);
  eval->add_option("--model", rc.model, "checkpoint path")->required();
  eval->add_option("--data", rc.data, "input epoch file")->required();
  eval->add_option("--out", rc.out, "optional metrics.json output path");
  eval->add_option("--batch-size", rc.batch_size, "inference batch size");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer");
  add_common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    std::cout << (parsed.empty() ? app.help() : parsed.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) return detail::run_synth(rc);
    if (train->parsed()) return detail::run_train(rc);
    if (eval->parsed()) return detail::run_eval(rc);
    if (gradcheck->parsed()) return detail::run_gradcheck(rc);
    std::cerr << "usage error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("sten");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sten::cli
