#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sten/conv.hpp"
#include "sten/layers.hpp"
#include "sten/rng.hpp"
#include "sten/tensor.hpp"

namespace sten {

// Architecture constants for the spatio-temporal stack:
//   conv2d(F1, [1,temporal_kernel], same) -> BN
//   -> depthwise([n_channels,1], D, valid) -> BN -> ELU -> avgpool(pool1) -> dropout
//   -> separable(sep over time, F2) -> BN -> ELU -> avgpool(pool2) -> dropout
//   -> flatten -> dense(dense_units, ReLU) -> dense(n_classes) -> softmax head
struct ArchConfig {
  int64_t n_channels{128};        // electrode axis
  int64_t n_samples{875};         // time axis (7 s at 125 Hz)
  int64_t temporal_filters{8};    // F1
  int64_t depth_multiplier{2};    // D
  int64_t separable_filters{16};  // F2 = F1 * D
  int64_t temporal_kernel{64};
  int64_t separable_kernel{16};
  int64_t pool1{4};
  int64_t pool2{8};
  float dropout_p{0.5f};
  int64_t dense_units{64};
  int64_t n_classes{2};
  std::optional<float> maxnorm_depthwise{1.0f};
  std::optional<float> maxnorm_dense{0.25f};

  static constexpr double kBatchNormEps = 1e-3;
  static constexpr double kBatchNormMomentum = 0.99;

  int64_t pooled_samples() const { return (n_samples / pool1) / pool2; }
  int64_t flat_features() const { return separable_filters * pooled_samples(); }

  void validate() const {
    auto positive = [](int64_t v, const char* name) {
      if (v < 1) {
        throw std::invalid_argument(std::string("arch config: ") + name +
                                    " must be >= 1, got " + std::to_string(v));
      }
    };
    positive(n_channels, "n_channels");
    positive(n_samples, "n_samples");
    positive(temporal_filters, "temporal_filters");
    positive(depth_multiplier, "depth_multiplier");
    positive(separable_filters, "separable_filters");
    positive(temporal_kernel, "temporal_kernel");
    positive(separable_kernel, "separable_kernel");
    positive(pool1, "pool1");
    positive(pool2, "pool2");
    positive(dense_units, "dense_units");
    if (n_classes < 2) {
      throw std::invalid_argument("arch config: n_classes must be >= 2, got " +
                                  std::to_string(n_classes));
    }
    if (pooled_samples() < 1) {
      throw std::invalid_argument(
          "arch config: floor(floor(n_samples/pool1)/pool2) must be >= 1; n_samples " +
          std::to_string(n_samples) + " with pools " + std::to_string(pool1) + " and " +
          std::to_string(pool2) + " leaves " + std::to_string(pooled_samples()));
    }
    if (separable_filters != temporal_filters * depth_multiplier) {
      throw std::invalid_argument("arch config: separable_filters (" +
                                  std::to_string(separable_filters) +
                                  ") must equal temporal_filters * depth_multiplier (" +
                                  std::to_string(temporal_filters * depth_multiplier) + ")");
    }
    if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) {
      throw std::invalid_argument("arch config: dropout_p must be in [0,1), got " +
                                  std::to_string(dropout_p));
    }
    for (const auto& [limit, name] :
         {std::pair{maxnorm_depthwise, "maxnorm_depthwise"}, {maxnorm_dense, "maxnorm_dense"}}) {
      if (limit && *limit <= 0.0f) {
        throw std::invalid_argument(std::string("arch config: ") + name +
                                    " must be positive when set");
      }
    }
  }
};

struct ParamEntry {
  std::string name;
  Tensor value;
  bool trainable{true};
};

// Named, ordered registry of model tensors. Iteration order is the definition
// order of the layer stack and is part of the checkpoint contract.
struct ModelParams {
  ArchConfig config;
  std::vector<ParamEntry> entries;

  int64_t find(std::string_view name) const {
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name == name) return static_cast<int64_t>(i);
    }
    return -1;
  }

  const Tensor& tensor(std::string_view name) const {
    const int64_t i = find(name);
    if (i < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return entries[static_cast<size_t>(i)].value;
  }

  Tensor& tensor(std::string_view name) {
    const int64_t i = find(name);
    if (i < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return entries[static_cast<size_t>(i)].value;
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const ParamEntry& e : entries) {
      if (e.trainable) n += e.value.size();
    }
    return n;
  }
};

// Gradients aligned with ModelParams::entries; non-trainable slots stay empty.
struct ModelGrads {
  std::vector<Tensor> by_entry;
};

namespace detail {

// Glorot-uniform with the fan convention of 4-D conv kernels: receptive field
// times input channels in, receptive field times depth/output channels out.
inline Tensor glorot_uniform(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng_uniform<float>(rng, std::move(shape), -limit, limit);
}

inline void project_group_to_ball(float* values, int64_t count, int64_t stride, float limit) {
  double sq = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    const double v = values[i * stride];
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > static_cast<double>(limit) * (1.0 + 1e-6)) {
    const float scale = static_cast<float>(limit / norm);
    for (int64_t i = 0; i < count; ++i) values[i * stride] *= scale;
  }
}

}  // namespace detail

// Rescales constrained weight groups onto their L2 balls: each per-output
// depthwise kernel to maxnorm_depthwise, each classifier weight column to
// maxnorm_dense. Groups already inside the ball are left untouched.
inline void apply_maxnorm(ModelParams& params) {
  const ArchConfig& cfg = params.config;
  if (cfg.maxnorm_depthwise) {
    Tensor& k = params.tensor("spatial_depthwise.kernel");
    const int64_t groups = k.dim(0) * k.dim(1);
    const int64_t span = k.dim(2) * k.dim(3);
    for (int64_t g = 0; g < groups; ++g) {
      detail::project_group_to_ball(k.data() + g * span, span, 1, *cfg.maxnorm_depthwise);
    }
  }
  if (cfg.maxnorm_dense) {
    Tensor& w = params.tensor("classifier.weight");
    const int64_t rows = w.dim(0), cols = w.dim(1);
    for (int64_t j = 0; j < cols; ++j) {
      detail::project_group_to_ball(w.data() + j, rows, cols, *cfg.maxnorm_dense);
    }
  }
}

// Builds the layer stack's parameters: Glorot-uniform conv/dense kernels,
// gamma = 1, beta = 0, running mean = 0, running var = 1, zero biases. The
// configured max-norm constraints hold from construction on.
inline ModelParams build_model(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams params;
  params.config = cfg;
  auto add = [&params](std::string name, Tensor value, bool trainable) {
    params.entries.push_back({std::move(name), std::move(value), trainable});
  };
  auto add_batchnorm = [&add](const std::string& prefix, int64_t channels) {
    add(prefix + ".gamma", Tensor({channels}, 1.0f), true);
    add(prefix + ".beta", Tensor({channels}, 0.0f), true);
    add(prefix + ".running_mean", Tensor({channels}, 0.0f), false);
    add(prefix + ".running_var", Tensor({channels}, 1.0f), false);
  };

  const int64_t f1 = cfg.temporal_filters, d = cfg.depth_multiplier, f2 = cfg.separable_filters;
  add("temporal_conv.kernel",
      detail::glorot_uniform(rng, {f1, 1, 1, cfg.temporal_kernel}, cfg.temporal_kernel,
                          cfg.temporal_kernel * f1),
      true);
  add_batchnorm("bn1", f1);
  add("spatial_depthwise.kernel",
      detail::glorot_uniform(rng, {f1, d, cfg.n_channels, 1}, cfg.n_channels * f1,
                          cfg.n_channels * d),
      true);
  add_batchnorm("bn2", f1 * d);
  add("separable.depth_kernel",
      detail::glorot_uniform(rng, {f1 * d, 1, 1, cfg.separable_kernel},
                          cfg.separable_kernel * f1 * d, cfg.separable_kernel),
      true);
  add("separable.point_kernel", detail::glorot_uniform(rng, {f2, f1 * d, 1, 1}, f1 * d, f2), true);
  add_batchnorm("bn3", f2);
  add("dense_hidden.weight",
      detail::glorot_uniform(rng, {cfg.flat_features(), cfg.dense_units}, cfg.flat_features(),
                          cfg.dense_units),
      true);
  add("dense_hidden.bias", Tensor({cfg.dense_units}, 0.0f), true);
  add("classifier.weight",
      detail::glorot_uniform(rng, {cfg.dense_units, cfg.n_classes}, cfg.dense_units, cfg.n_classes),
      true);
  add("classifier.bias", Tensor({cfg.n_classes}, 0.0f), true);

  apply_maxnorm(params);
  return params;
}

// Saved per-layer state for one train-mode forward pass.
struct ModelContext {
  Conv2dCtx<float> conv1;
  BatchNormCtx<float> bn1;
  DepthwiseCtx<float> depthwise;
  BatchNormCtx<float> bn2;
  ActCtx<float> elu1;
  AvgPoolCtx<float> pool1;
  DropoutCtx<float> drop1;
  SeparableCtx<float> separable;
  BatchNormCtx<float> bn3;
  ActCtx<float> elu2;
  AvgPoolCtx<float> pool2;
  DropoutCtx<float> drop2;
  Shape pre_flatten_shape;
  DenseCtx<float> dense_hidden;
  ActCtx<float> relu;
  DenseCtx<float> classifier;
};

namespace detail {

inline void check_model_input(const ArchConfig& cfg, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.n_channels ||
      x.dim(3) != cfg.n_samples) {
    throw std::invalid_argument(
        "model input must be [N,1," + std::to_string(cfg.n_channels) + "," +
        std::to_string(cfg.n_samples) + "], got " + shape_to_string(x.shape()));
  }
}

template <bool kTrainMode, class ParamsRef>
Tensor model_forward_impl(ParamsRef& params, const Tensor& x, Rng* rng, ModelContext* ctx) {
  const ArchConfig& cfg = params.config;
  check_model_input(cfg, x);
  const Mode mode = kTrainMode ? Mode::kTrain : Mode::kInfer;
  Rng unused_rng(0);
  Rng& dropout_rng = rng ? *rng : unused_rng;

  auto run_batchnorm = [&params](const std::string& prefix, const Tensor& in,
                                 BatchNormCtx<float>* out_ctx) {
    BatchNormResult<float> r = batchnorm_forward(
        in, params.tensor(prefix + ".gamma"), params.tensor(prefix + ".beta"),
        params.tensor(prefix + ".running_mean"), params.tensor(prefix + ".running_var"),
        kTrainMode ? Mode::kTrain : Mode::kInfer, ArchConfig::kBatchNormMomentum,
        ArchConfig::kBatchNormEps);
    if constexpr (kTrainMode) {
      params.tensor(prefix + ".running_mean") = std::move(r.running_mean);
      params.tensor(prefix + ".running_var") = std::move(r.running_var);
    }
    if (out_ctx) *out_ctx = std::move(r.ctx);
    return std::move(r.y);
  };

  auto [c1, c1ctx] = conv2d_forward(x, params.tensor("temporal_conv.kernel"), Padding::kSame);
  if (ctx) ctx->conv1 = std::move(c1ctx);
  Tensor h = run_batchnorm("bn1", c1, ctx ? &ctx->bn1 : nullptr);

  auto [dw, dwctx] = depthwise_conv2d_forward(h, params.tensor("spatial_depthwise.kernel"));
  if (ctx) ctx->depthwise = std::move(dwctx);
  h = run_batchnorm("bn2", dw, ctx ? &ctx->bn2 : nullptr);
  {
    auto [a, actx] = elu_forward(h);
    h = std::move(a);
    if (ctx) ctx->elu1 = std::move(actx);
  }
  {
    auto [p, pctx] = avgpool_forward(h, cfg.pool1);
    h = std::move(p);
    if (ctx) ctx->pool1 = std::move(pctx);
  }
  {
    auto [dp, dpctx] = dropout_forward(h, cfg.dropout_p, mode, dropout_rng);
    h = std::move(dp);
    if (ctx) ctx->drop1 = std::move(dpctx);
  }

  auto [sep, sepctx] = separable_conv2d_forward(h, params.tensor("separable.depth_kernel"),
                                                params.tensor("separable.point_kernel"));
  if (ctx) ctx->separable = std::move(sepctx);
  h = run_batchnorm("bn3", sep, ctx ? &ctx->bn3 : nullptr);
  {
    auto [a, actx] = elu_forward(h);
    h = std::move(a);
    if (ctx) ctx->elu2 = std::move(actx);
  }
  {
    auto [p, pctx] = avgpool_forward(h, cfg.pool2);
    h = std::move(p);
    if (ctx) ctx->pool2 = std::move(pctx);
  }
  {
    auto [dp, dpctx] = dropout_forward(h, cfg.dropout_p, mode, dropout_rng);
    h = std::move(dp);
    if (ctx) ctx->drop2 = std::move(dpctx);
  }

  if (ctx) ctx->pre_flatten_shape = h.shape();
  Tensor flat = h.reshaped({h.dim(0), cfg.flat_features()});

  auto [d1, d1ctx] = dense_forward(flat, params.tensor("dense_hidden.weight"),
                                   params.tensor("dense_hidden.bias"));
  if (ctx) ctx->dense_hidden = std::move(d1ctx);
  Tensor act;
  {
    auto [a, actx] = relu_forward(d1);
    act = std::move(a);
    if (ctx) ctx->relu = std::move(actx);
  }
  auto [logits, d2ctx] = dense_forward(act, params.tensor("classifier.weight"),
                                       params.tensor("classifier.bias"));
  if (ctx) ctx->classifier = std::move(d2ctx);
  return std::move(logits);
}

}  // namespace detail

// Inference-mode forward pass: a pure function of (params, x); batchnorm uses
// running statistics and dropout is an identity.
inline Tensor forward_infer(const ModelParams& params, const Tensor& x) {
  return detail::model_forward_impl<false>(params, x, nullptr, nullptr);
}

// Train-mode forward pass: updates batchnorm running statistics in place and
// consumes rng only for the dropout masks.
inline std::pair<Tensor, ModelContext> forward_train(ModelParams& params, const Tensor& x,
                                                     Rng& rng) {
  ModelContext ctx;
  Tensor logits = detail::model_forward_impl<true>(params, x, &rng, &ctx);
  return {std::move(logits), std::move(ctx)};
}

// Full backward pass for one train-mode forward. Returns gradients aligned
// with params.entries; batchnorm running statistics get none.
inline ModelGrads model_backward(const ModelParams& params, ModelContext& ctx,
                                 const Tensor& grad_logits) {
  ModelGrads grads;
  grads.by_entry.resize(params.entries.size());
  auto slot = [&params, &grads](std::string_view name) -> Tensor& {
    const int64_t i = params.find(name);
    if (i < 0) throw std::logic_error("model_backward: unknown parameter name");
    return grads.by_entry[static_cast<size_t>(i)];
  };

  DenseGrads<float> d2 = dense_backward(ctx.classifier, grad_logits);
  slot("classifier.weight") = std::move(d2.weight);
  slot("classifier.bias") = std::move(d2.bias);
  Tensor g = relu_backward(ctx.relu, d2.input);
  DenseGrads<float> d1 = dense_backward(ctx.dense_hidden, g);
  slot("dense_hidden.weight") = std::move(d1.weight);
  slot("dense_hidden.bias") = std::move(d1.bias);

  g = d1.input.reshaped(ctx.pre_flatten_shape);
  g = dropout_backward(ctx.drop2, g);
  g = avgpool_backward(ctx.pool2, g);
  g = elu_backward(ctx.elu2, g);
  BatchNormGrads<float> b3 = batchnorm_backward(ctx.bn3, g);
  slot("bn3.gamma") = std::move(b3.gamma);
  slot("bn3.beta") = std::move(b3.beta);
  SeparableGrads<float> sep = separable_conv2d_backward(ctx.separable, b3.input);
  slot("separable.depth_kernel") = std::move(sep.depth_kernel);
  slot("separable.point_kernel") = std::move(sep.point_kernel);

  g = dropout_backward(ctx.drop1, sep.input);
  g = avgpool_backward(ctx.pool1, g);
  g = elu_backward(ctx.elu1, g);
  BatchNormGrads<float> b2 = batchnorm_backward(ctx.bn2, g);
  slot("bn2.gamma") = std::move(b2.gamma);
  slot("bn2.beta") = std::move(b2.beta);
  DepthwiseGrads<float> dw = depthwise_conv2d_backward(ctx.depthwise, b2.input);
  slot("spatial_depthwise.kernel") = std::move(dw.kernel);

  BatchNormGrads<float> b1 = batchnorm_backward(ctx.bn1, dw.input);
  slot("bn1.gamma") = std::move(b1.gamma);
  slot("bn1.beta") = std::move(b1.beta);
  Conv2dGrads<float> c1 = conv2d_backward(ctx.conv1, b1.input);
  slot("temporal_conv.kernel") = std::move(c1.kernel);
  return grads;
}

// Argmax class per row; ties break toward the lower index (0 = Low, 1 = High).
inline std::vector<int> predict(const ModelParams& params, const Tensor& x) {
  const Tensor logits = forward_infer(params, x);
  const int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = static_cast<int>(j);
    }
    labels[static_cast<size_t>(i)] = best;
  }
  return labels;
}

}  // namespace sten
