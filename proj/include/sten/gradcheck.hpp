#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sten/conv.hpp"
#include "sten/layers.hpp"
#include "sten/loss.hpp"
#include "sten/rng.hpp"
#include "sten/tensor.hpp"

namespace sten {

// The checker runs entirely in double precision: a case maps a list of input
// tensors to a scalar loss, and its gradient function returns one gradient
// tensor per input.
using GradcheckInputs = std::vector<TensorD>;

struct GradcheckCase {
  std::string name;
  GradcheckInputs inputs;
  std::function<double(const GradcheckInputs&)> loss;
  std::function<GradcheckInputs(const GradcheckInputs&)> grads;
};

struct GradcheckReport {
  std::string name;
  double max_rel_error{0.0};
};

// Central differences with step h = 1e-3 * max(1, |theta|) per coordinate;
// returns max over all coordinates of |analytic - numeric| /
// max(|analytic|, |numeric|, 1e-8).
inline double gradcheck_max_rel_error(const GradcheckCase& c) {
  GradcheckInputs analytic = c.grads(c.inputs);
  if (analytic.size() != c.inputs.size()) {
    throw std::logic_error("gradcheck case '" + c.name + "' returned " +
                           std::to_string(analytic.size()) + " gradients for " +
                           std::to_string(c.inputs.size()) + " inputs");
  }
  double worst = 0.0;
  GradcheckInputs probe = c.inputs;
  for (size_t t = 0; t < probe.size(); ++t) {
    if (analytic[t].shape() != probe[t].shape()) {
      throw std::logic_error("gradcheck case '" + c.name + "' gradient " + std::to_string(t) +
                             " has shape " + shape_to_string(analytic[t].shape()) +
                             " but the input is " + shape_to_string(probe[t].shape()));
    }
    for (int64_t i = 0; i < probe[t].size(); ++i) {
      const double theta = probe[t][i];
      const double h = 1e-3 * std::max(1.0, std::abs(theta));
      probe[t][i] = theta + h;
      const double lp = c.loss(probe);
      probe[t][i] = theta - h;
      const double lm = c.loss(probe);
      probe[t][i] = theta;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[t][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        throw std::runtime_error("gradcheck case '" + c.name + "' hit a non-finite value at input " +
                                 std::to_string(t) + " coordinate " + std::to_string(i));
      }
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace detail {

// Scalar probe loss for vector-valued layers: sum(y .* weights) with a fixed
// random weight tensor, whose cotangent is the weight tensor itself.
inline double weighted_sum(const TensorD& y, const TensorD& w) {
  double s = 0.0;
  for (int64_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

inline TensorD margin_from_zero(TensorD t, double margin) {
  for (int64_t i = 0; i < t.size(); ++i) {
    t[i] += t[i] >= 0.0 ? margin : -margin;
  }
  return t;
}

}  // namespace detail

// The named layer suite behind the `gradcheck` command and the acceptance
// gate: every layer, plus one full conv -> batchnorm -> ELU -> avgpool block.
inline std::vector<GradcheckCase> make_gradcheck_cases(uint64_t seed) {
  std::vector<GradcheckCase> cases;
  Rng rng(seed);
  auto draw = [&rng](Shape shape) { return rng_normal<double>(rng, std::move(shape), 0.0, 1.0); };

  {  // dense
    GradcheckCase c;
    c.name = "dense";
    c.inputs = {draw({3, 4}), draw({4, 5}), draw({5})};
    TensorD cot = draw({3, 5});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = dense_forward(in[0], in[1], in[2]);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = dense_forward(in[0], in[1], in[2]);
      (void)y;
      DenseGrads<double> g = dense_backward(ctx, cot);
      return GradcheckInputs{g.input, g.weight, g.bias};
    };
    cases.push_back(std::move(c));
  }
  {  // conv2d, valid padding
    GradcheckCase c;
    c.name = "conv2d_valid";
    c.inputs = {draw({2, 2, 4, 6}), draw({3, 2, 2, 3})};
    TensorD cot = draw({2, 3, 3, 4});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = conv2d_forward(in[0], in[1], Padding::kValid);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = conv2d_forward(in[0], in[1], Padding::kValid);
      (void)y;
      Conv2dGrads<double> g = conv2d_backward(ctx, cot);
      return GradcheckInputs{g.input, g.kernel};
    };
    cases.push_back(std::move(c));
  }
  {  // conv2d, same padding with an even kernel (asymmetric pad)
    GradcheckCase c;
    c.name = "conv2d_same";
    c.inputs = {draw({2, 2, 4, 6}), draw({3, 2, 2, 4})};
    TensorD cot = draw({2, 3, 4, 6});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = conv2d_forward(in[0], in[1], Padding::kSame);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = conv2d_forward(in[0], in[1], Padding::kSame);
      (void)y;
      Conv2dGrads<double> g = conv2d_backward(ctx, cot);
      return GradcheckInputs{g.input, g.kernel};
    };
    cases.push_back(std::move(c));
  }
  {  // depthwise
    GradcheckCase c;
    c.name = "depthwise";
    c.inputs = {draw({2, 3, 4, 5}), draw({3, 2, 3, 2})};
    TensorD cot = draw({2, 6, 2, 4});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = depthwise_conv2d_forward(in[0], in[1]);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = depthwise_conv2d_forward(in[0], in[1]);
      (void)y;
      DepthwiseGrads<double> g = depthwise_conv2d_backward(ctx, cot);
      return GradcheckInputs{g.input, g.kernel};
    };
    cases.push_back(std::move(c));
  }
  {  // separable
    GradcheckCase c;
    c.name = "separable";
    c.inputs = {draw({2, 3, 1, 8}), draw({3, 1, 1, 4}), draw({5, 3, 1, 1})};
    TensorD cot = draw({2, 5, 1, 8});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = separable_conv2d_forward(in[0], in[1], in[2]);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = separable_conv2d_forward(in[0], in[1], in[2]);
      (void)y;
      SeparableGrads<double> g = separable_conv2d_backward(ctx, cot);
      return GradcheckInputs{g.input, g.depth_kernel, g.point_kernel};
    };
    cases.push_back(std::move(c));
  }
  {  // batchnorm, train mode, through the batch statistics
    GradcheckCase c;
    c.name = "batchnorm_train";
    c.inputs = {draw({4, 3, 2, 5}), draw({3}), draw({3})};
    TensorD cot = draw({4, 3, 2, 5});
    const TensorD rmean({3}, 0.0);
    const TensorD rvar({3}, 1.0);
    c.loss = [cot, rmean, rvar](const GradcheckInputs& in) {
      BatchNormResult<double> r =
          batchnorm_forward(in[0], in[1], in[2], rmean, rvar, Mode::kTrain, 0.99, 1e-3);
      return detail::weighted_sum(r.y, cot);
    };
    c.grads = [cot, rmean, rvar](const GradcheckInputs& in) {
      BatchNormResult<double> r =
          batchnorm_forward(in[0], in[1], in[2], rmean, rvar, Mode::kTrain, 0.99, 1e-3);
      BatchNormGrads<double> g = batchnorm_backward(r.ctx, cot);
      return GradcheckInputs{g.input, g.gamma, g.beta};
    };
    cases.push_back(std::move(c));
  }
  {  // avgpool with a dropped remainder
    GradcheckCase c;
    c.name = "avgpool";
    c.inputs = {draw({2, 3, 1, 9})};
    TensorD cot = draw({2, 3, 1, 2});
    c.loss = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = avgpool_forward(in[0], 4);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = avgpool_forward(in[0], 4);
      (void)y;
      return GradcheckInputs{avgpool_backward(ctx, cot)};
    };
    cases.push_back(std::move(c));
  }
  {  // dropout with the mask pinned by reseeding per evaluation
    GradcheckCase c;
    c.name = "dropout_masked";
    const uint64_t mask_seed = rng.next_u64();
    c.inputs = {draw({3, 4, 2, 5})};
    TensorD cot = draw({3, 4, 2, 5});
    c.loss = [cot, mask_seed](const GradcheckInputs& in) {
      Rng mask_rng(mask_seed);
      auto [y, ctx] = dropout_forward(in[0], 0.4, Mode::kTrain, mask_rng);
      (void)ctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot, mask_seed](const GradcheckInputs& in) {
      Rng mask_rng(mask_seed);
      auto [y, ctx] = dropout_forward(in[0], 0.4, Mode::kTrain, mask_rng);
      (void)y;
      return GradcheckInputs{dropout_backward(ctx, cot)};
    };
    cases.push_back(std::move(c));
  }
  {  // elu (inputs kept away from the kink so central differences are clean)
    GradcheckCase c;
    c.name = "elu";
    c.inputs = {detail::margin_from_zero(draw({4, 7}), 0.1)};
    TensorD cot = draw({4, 7});
    c.loss = [cot](const GradcheckInputs& in) {
      return detail::weighted_sum(elu(in[0]), cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = elu_forward(in[0]);
      (void)y;
      return GradcheckInputs{elu_backward(ctx, cot)};
    };
    cases.push_back(std::move(c));
  }
  {  // relu
    GradcheckCase c;
    c.name = "relu";
    c.inputs = {detail::margin_from_zero(draw({4, 7}), 0.1)};
    TensorD cot = draw({4, 7});
    c.loss = [cot](const GradcheckInputs& in) {
      return detail::weighted_sum(relu(in[0]), cot);
    };
    c.grads = [cot](const GradcheckInputs& in) {
      auto [y, ctx] = relu_forward(in[0]);
      (void)y;
      return GradcheckInputs{relu_backward(ctx, cot)};
    };
    cases.push_back(std::move(c));
  }
  {  // fused softmax + cross-entropy, loss checked directly
    GradcheckCase c;
    c.name = "softmax_xent";
    c.inputs = {draw({5, 3})};
    const std::vector<int> labels{0, 2, 1, 1, 0};
    c.loss = [labels](const GradcheckInputs& in) {
      return softmax_xent(in[0], labels).loss;
    };
    c.grads = [labels](const GradcheckInputs& in) {
      return GradcheckInputs{softmax_xent(in[0], labels).grad_logits};
    };
    cases.push_back(std::move(c));
  }
  {  // one full model block: conv(same) -> batchnorm(train) -> ELU -> avgpool
    GradcheckCase c;
    c.name = "conv_bn_elu_pool_block";
    c.inputs = {draw({3, 2, 4, 10}), draw({4, 2, 1, 5}), draw({4}), draw({4})};
    TensorD cot = draw({3, 4, 4, 5});
    const TensorD rmean({4}, 0.0);
    const TensorD rvar({4}, 1.0);
    auto run_forward = [rmean, rvar](const GradcheckInputs& in) {
      auto [c1, cctx] = conv2d_forward(in[0], in[1], Padding::kSame);
      BatchNormResult<double> bn =
          batchnorm_forward(c1, in[2], in[3], rmean, rvar, Mode::kTrain, 0.99, 1e-3);
      auto [a, actx] = elu_forward(bn.y);
      auto [y, pctx] = avgpool_forward(a, 2);
      return std::tuple{std::move(y), std::move(cctx), std::move(bn.ctx), std::move(actx),
                        std::move(pctx)};
    };
    c.loss = [cot, run_forward](const GradcheckInputs& in) {
      auto [y, cctx, bctx, actx, pctx] = run_forward(in);
      (void)cctx;
      (void)bctx;
      (void)actx;
      (void)pctx;
      return detail::weighted_sum(y, cot);
    };
    c.grads = [cot, run_forward](const GradcheckInputs& in) {
      auto [y, cctx, bctx, actx, pctx] = run_forward(in);
      (void)y;
      TensorD g = avgpool_backward(pctx, cot);
      g = elu_backward(actx, g);
      BatchNormGrads<double> bg = batchnorm_backward(bctx, g);
      Conv2dGrads<double> cg = conv2d_backward(cctx, bg.input);
      return GradcheckInputs{cg.input, cg.kernel, bg.gamma, bg.beta};
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

inline std::vector<GradcheckReport> run_gradcheck_suite(uint64_t seed) {
  std::vector<GradcheckReport> reports;
  for (GradcheckCase& c : make_gradcheck_cases(seed)) {
    reports.push_back({c.name, gradcheck_max_rel_error(c)});
  }
  return reports;
}

}  // namespace sten
