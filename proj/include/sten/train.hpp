#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sten/adam.hpp"
#include "sten/checkpoint.hpp"
#include "sten/epochs.hpp"
#include "sten/loss.hpp"
#include "sten/model.hpp"
#include "sten/rng.hpp"

namespace sten {

struct TrainConfig {
  float learning_rate{0.01f};
  int max_epochs{200};
  int patience{35};  // early stopping on validation loss
  int batch_size{16};
  float beta1{0.9f};
  float beta2{0.999f};
  float eps_adam{1e-8f};
  uint64_t seed{0};
  std::string checkpoint_path;
  std::string csv_log_path;  // optional per-epoch "epoch,train_loss,val_loss"

  void validate() const {
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) {
      throw std::invalid_argument("train config: patience must satisfy 1 <= patience < max_epochs");
    }
    if (batch_size < 2) {
      throw std::invalid_argument("train config: batch_size must be >= 2 for train-mode batchnorm");
    }
    if (!(learning_rate >= 0.0f)) {
      throw std::invalid_argument("train config: learning_rate must be >= 0");
    }
  }
};

struct FitReport {
  std::vector<double> train_loss;  // one entry per epoch run
  std::vector<double> val_loss;
  int stopped_epoch{0};
  int best_epoch{0};
  double best_val_loss{std::numeric_limits<double>::infinity()};
  bool restored{false};
};

namespace detail {

// Batch tensor [B,1,C,T] gathered from the trials at the given indices.
inline Tensor gather_batch(const EpochSet& es, const std::vector<int64_t>& order, size_t first,
                           size_t count, std::vector<int>* batch_labels,
                           const std::vector<int>& labels) {
  const int64_t span = es.n_channels() * es.n_samples();
  Tensor x({static_cast<int64_t>(count), 1, es.n_channels(), es.n_samples()});
  if (batch_labels) batch_labels->resize(count);
  for (size_t i = 0; i < count; ++i) {
    const int64_t t = order[first + i];
    std::memcpy(x.data() + static_cast<int64_t>(i) * span, es.trial(t),
                static_cast<size_t>(span) * sizeof(float));
    if (batch_labels) (*batch_labels)[i] = labels[static_cast<size_t>(t)];
  }
  return x;
}

inline std::vector<int64_t> identity_order(int64_t n) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  return order;
}

}  // namespace detail

// One pass over the shuffled training split: per batch, train-mode forward,
// softmax cross-entropy, full backward, Adam step, max-norm projection. The
// final partial batch is kept when its size is >= 2 and dropped otherwise.
// Returns the sample-weighted mean training loss.
inline double train_epoch(ModelParams& params, AdamState& state, const LabeledSet& split,
                          const TrainConfig& cfg, Rng& rng) {
  if (split.epochs.n_trials() < 1) {
    throw std::invalid_argument("train_epoch needs a non-empty training split");
  }
  if (split.labels.size() != static_cast<size_t>(split.epochs.n_trials())) {
    throw std::invalid_argument("train_epoch labels do not match the training split");
  }
  const int64_t n = split.epochs.n_trials();
  const std::vector<int64_t> order = shuffled_indices(rng, n);
  double loss_sum = 0.0;
  int64_t seen = 0;
  std::vector<int> batch_labels;
  for (int64_t first = 0; first < n; first += cfg.batch_size) {
    const int64_t count = std::min<int64_t>(cfg.batch_size, n - first);
    if (count < 2) break;  // train-mode batchnorm needs >= 2 samples
    Tensor x = detail::gather_batch(split.epochs, order, static_cast<size_t>(first),
                                    static_cast<size_t>(count), &batch_labels, split.labels);
    auto [logits, ctx] = forward_train(params, x, rng);
    SoftmaxXentResult<float> loss = softmax_xent(logits, batch_labels);
    ModelGrads grads = model_backward(params, ctx, loss.grad_logits);
    adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_adam);
    apply_maxnorm(params);
    loss_sum += loss.loss * static_cast<double>(count);
    seen += count;
  }
  if (seen == 0) {
    throw std::invalid_argument("train_epoch: no batch of size >= 2 could be formed from " +
                                std::to_string(n) + " trials");
  }
  return loss_sum / static_cast<double>(seen);
}

// Mean cross-entropy of the split in inference mode (dropout off, batchnorm
// on running statistics), batched in a fixed order.
inline double eval_loss(const ModelParams& params, const LabeledSet& split, int batch_size) {
  if (split.epochs.n_trials() < 1) {
    throw std::invalid_argument("eval_loss needs a non-empty split");
  }
  const int64_t n = split.epochs.n_trials();
  const std::vector<int64_t> order = detail::identity_order(n);
  double loss_sum = 0.0;
  std::vector<int> batch_labels;
  for (int64_t first = 0; first < n; first += batch_size) {
    const int64_t count = std::min<int64_t>(batch_size, n - first);
    Tensor x = detail::gather_batch(split.epochs, order, static_cast<size_t>(first),
                                    static_cast<size_t>(count), &batch_labels, split.labels);
    const Tensor logits = forward_infer(params, x);
    loss_sum += softmax_xent(logits, batch_labels).loss * static_cast<double>(count);
  }
  return loss_sum / static_cast<double>(n);
}

// Batched argmax predictions over a whole epoch set.
inline std::vector<int> predict_set(const ModelParams& params, const EpochSet& es,
                                    int batch_size) {
  std::vector<int> all;
  all.reserve(static_cast<size_t>(es.n_trials()));
  const std::vector<int64_t> order = detail::identity_order(es.n_trials());
  const std::vector<int> no_labels(static_cast<size_t>(es.n_trials()), 0);
  for (int64_t first = 0; first < es.n_trials(); first += batch_size) {
    const int64_t count = std::min<int64_t>(batch_size, es.n_trials() - first);
    Tensor x = detail::gather_batch(es, order, static_cast<size_t>(first),
                                    static_cast<size_t>(count), nullptr, no_labels);
    const std::vector<int> batch = predict(params, x);
    all.insert(all.end(), batch.begin(), batch.end());
  }
  return all;
}

// Epoch loop with early stopping: after each epoch the validation loss is
// computed via the supplied evaluator; any strict improvement saves a
// checkpoint and resets the patience counter; training stops after `patience`
// non-improving epochs or at max_epochs, and the best checkpoint is restored.
inline std::pair<ModelParams, FitReport> fit_with_evaluator(
    ModelParams params, const LabeledSet& train_split, const TrainConfig& cfg,
    const std::function<double(const ModelParams&, int)>& evaluate_validation) {
  cfg.validate();
  if (cfg.checkpoint_path.empty()) {
    throw std::invalid_argument("fit requires a checkpoint path");
  }
  // Fail on an unwritable checkpoint path before epoch 1; the probe also
  // keeps the initial parameters restorable if no epoch ever improves.
  save_checkpoint(params, cfg.checkpoint_path);

  std::ofstream csv;
  if (!cfg.csv_log_path.empty()) {
    csv.open(cfg.csv_log_path, std::ios::trunc);
    if (!csv) {
      throw std::runtime_error("cannot open csv log '" + cfg.csv_log_path + "' for writing");
    }
    csv << "epoch,train_loss,val_loss\n";
  }

  FitReport report;
  Rng rng(cfg.seed);
  AdamState state = init_adam(params);
  int wait = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double train_loss = train_epoch(params, state, train_split, cfg, rng);
    const double val_loss = evaluate_validation(params, epoch);
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val_loss);
    report.stopped_epoch = epoch;
    if (csv.is_open()) {
      char line[96];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", epoch, train_loss, val_loss);
      csv << line;
    }
    if (val_loss < report.best_val_loss) {
      report.best_val_loss = val_loss;
      report.best_epoch = epoch;
      wait = 0;
      save_checkpoint(params, cfg.checkpoint_path);
    } else {
      ++wait;
      if (wait >= cfg.patience) break;
    }
  }
  params = load_checkpoint(cfg.checkpoint_path);
  report.restored = true;
  return {std::move(params), std::move(report)};
}

// Standard fit: validation loss evaluated on a subject-disjoint val split.
inline std::pair<ModelParams, FitReport> fit(ModelParams params, const LabeledSet& train_split,
                                             const LabeledSet& val_split,
                                             const TrainConfig& cfg) {
  if (val_split.epochs.n_trials() < 1) {
    throw std::invalid_argument("fit needs a non-empty validation split");
  }
  const int batch = cfg.batch_size;
  return fit_with_evaluator(
      std::move(params), train_split, cfg,
      [&val_split, batch](const ModelParams& p, int) { return eval_loss(p, val_split, batch); });
}

}  // namespace sten
