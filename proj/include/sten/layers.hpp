#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "sten/conv.hpp"
#include "sten/rng.hpp"
#include "sten/tensor.hpp"

namespace sten {

enum class Mode { kTrain, kInfer };

// ---------------------------------------------------------------------------
// Batch normalization, per channel over (N, H, W).

template <class T>
struct BatchNormCtx {
  TensorT<T> x_hat;    // normalized input, pre gamma/beta
  TensorT<T> gamma;    // [C]
  TensorT<T> inv_std;  // [C], 1/sqrt(batch_var + eps)
  Mode mode{Mode::kTrain};
  bool used{false};
};

template <class T>
struct BatchNormResult {
  TensorT<T> y;
  BatchNormCtx<T> ctx;
  TensorT<T> running_mean;  // updated in train mode, passthrough otherwise
  TensorT<T> running_var;
};

template <class T>
struct BatchNormGrads {
  TensorT<T> input;
  TensorT<T> gamma;
  TensorT<T> beta;
};

// Train mode normalizes by per-channel batch statistics (population variance)
// and updates running stats as running <- momentum*running + (1-momentum)*batch.
// Infer mode normalizes by the running stats only.
template <class T>
BatchNormResult<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                                     const TensorT<T>& beta, const TensorT<T>& running_mean,
                                     const TensorT<T>& running_var, Mode mode, double momentum,
                                     double eps) {
  detail::check_conv_input(x.shape(), "batchnorm");
  const int64_t n = x.dim(0), cn = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.size() != cn || beta.size() != cn || running_mean.size() != cn ||
      running_var.size() != cn) {
    throw std::invalid_argument("batchnorm parameter size does not match " +
                                std::to_string(cn) + " channels");
  }
  const int64_t m = n * h * w;  // elements per channel
  if (mode == Mode::kTrain && m < 2) {
    throw std::invalid_argument("batchnorm train mode needs at least 2 elements per channel, got " +
                                std::to_string(m));
  }

  TensorT<T> mean({cn});
  TensorT<T> var({cn});
  if (mode == Mode::kTrain) {
    for (int64_t c = 0; c < cn; ++c) {
      double sum = 0.0;
      for (int64_t in = 0; in < n; ++in) {
        const T* plane = x.data() + ((in * cn + c) * h) * w;
        for (int64_t i = 0; i < h * w; ++i) sum += plane[i];
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int64_t in = 0; in < n; ++in) {
        const T* plane = x.data() + ((in * cn + c) * h) * w;
        for (int64_t i = 0; i < h * w; ++i) {
          const double d = plane[i] - mu;
          sq += d * d;
        }
      }
      mean[c] = static_cast<T>(mu);
      var[c] = static_cast<T>(sq / static_cast<double>(m));
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  TensorT<T> inv_std({cn});
  for (int64_t c = 0; c < cn; ++c) {
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + eps));
  }

  TensorT<T> x_hat(x.shape());
  TensorT<T> y(x.shape());
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t c = 0; c < cn; ++c) {
      const T* xp = x.data() + ((in * cn + c) * h) * w;
      T* hp = x_hat.data() + ((in * cn + c) * h) * w;
      T* yp = y.data() + ((in * cn + c) * h) * w;
      const T mu = mean[c], is = inv_std[c], g = gamma[c], b = beta[c];
      for (int64_t i = 0; i < h * w; ++i) {
        hp[i] = (xp[i] - mu) * is;
        yp[i] = g * hp[i] + b;
      }
    }
  }

  TensorT<T> new_mean = running_mean;
  TensorT<T> new_var = running_var;
  if (mode == Mode::kTrain) {
    for (int64_t c = 0; c < cn; ++c) {
      new_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * mean[c]);
      new_var[c] = static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * var[c]);
    }
  }
  BatchNormCtx<T> ctx{std::move(x_hat), gamma, std::move(inv_std), mode, false};
  return {std::move(y), std::move(ctx), std::move(new_mean), std::move(new_var)};
}

// Exact gradient through the batch statistics (train mode).
template <class T>
BatchNormGrads<T> batchnorm_backward(BatchNormCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "batchnorm");
  detail::check_cotangent(cotangent, ctx.x_hat.shape(), "batchnorm");
  if (ctx.mode != Mode::kTrain) {
    throw std::logic_error("batchnorm backward requires a train-mode context");
  }
  const TensorT<T>& x_hat = ctx.x_hat;
  const int64_t n = x_hat.dim(0), cn = x_hat.dim(1), h = x_hat.dim(2), w = x_hat.dim(3);
  const int64_t m = n * h * w;

  TensorT<T> gx(x_hat.shape());
  TensorT<T> ggamma({cn});
  TensorT<T> gbeta({cn});
  for (int64_t c = 0; c < cn; ++c) {
    double sum_g = 0.0, sum_gh = 0.0;
    for (int64_t in = 0; in < n; ++in) {
      const T* gp = cotangent.data() + ((in * cn + c) * h) * w;
      const T* hp = x_hat.data() + ((in * cn + c) * h) * w;
      for (int64_t i = 0; i < h * w; ++i) {
        sum_g += gp[i];
        sum_gh += gp[i] * hp[i];
      }
    }
    ggamma[c] = static_cast<T>(sum_gh);
    gbeta[c] = static_cast<T>(sum_g);
    const double scale = static_cast<double>(ctx.gamma[c]) * ctx.inv_std[c];
    const double mean_g = sum_g / static_cast<double>(m);
    const double mean_gh = sum_gh / static_cast<double>(m);
    for (int64_t in = 0; in < n; ++in) {
      const T* gp = cotangent.data() + ((in * cn + c) * h) * w;
      const T* hp = x_hat.data() + ((in * cn + c) * h) * w;
      T* op = gx.data() + ((in * cn + c) * h) * w;
      for (int64_t i = 0; i < h * w; ++i) {
        op[i] = static_cast<T>(scale * (gp[i] - mean_g - hp[i] * mean_gh));
      }
    }
  }
  return {std::move(gx), std::move(ggamma), std::move(gbeta)};
}

// ---------------------------------------------------------------------------
// Average pooling along the time axis, non-overlapping windows, remainder
// samples dropped.

template <class T>
struct AvgPoolCtx {
  Shape in_shape;
  int64_t pool_w{1};
  bool used{false};
};

template <class T>
std::pair<TensorT<T>, AvgPoolCtx<T>> avgpool_forward(const TensorT<T>& x, int64_t pool_w) {
  detail::check_conv_input(x.shape(), "avgpool");
  const int64_t w = x.dim(3);
  if (pool_w < 1 || pool_w > w) {
    throw std::invalid_argument("avgpool pool width " + std::to_string(pool_w) +
                                " out of range for time axis of " + std::to_string(w));
  }
  const int64_t n = x.dim(0), cn = x.dim(1), h = x.dim(2);
  const int64_t ow = w / pool_w;
  TensorT<T> y({n, cn, h, ow});
  const T inv = T(1) / static_cast<T>(pool_w);
  const T* px = x.data();
  T* py = y.data();
  const int64_t rows = n * cn * h;
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = px + r * w;
    T* yrow = py + r * ow;
    for (int64_t c = 0; c < ow; ++c) {
      T acc = T(0);
      const T* win = xrow + c * pool_w;
      for (int64_t i = 0; i < pool_w; ++i) acc += win[i];
      yrow[c] = acc * inv;
    }
  }
  AvgPoolCtx<T> ctx{x.shape(), pool_w, false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
TensorT<T> avgpool_backward(AvgPoolCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "avgpool");
  const int64_t w = ctx.in_shape[3];
  const int64_t ow = w / ctx.pool_w;
  Shape want = ctx.in_shape;
  want[3] = ow;
  detail::check_cotangent(cotangent, want, "avgpool");
  TensorT<T> gx(ctx.in_shape);
  const T inv = T(1) / static_cast<T>(ctx.pool_w);
  const T* pg = cotangent.data();
  T* pgx = gx.data();
  const int64_t rows = ctx.in_shape[0] * ctx.in_shape[1] * ctx.in_shape[2];
  for (int64_t r = 0; r < rows; ++r) {
    const T* grow = pg + r * ow;
    T* gxrow = pgx + r * w;
    for (int64_t c = 0; c < ow; ++c) {
      const T v = grow[c] * inv;
      T* win = gxrow + c * ctx.pool_w;
      for (int64_t i = 0; i < ctx.pool_w; ++i) win[i] = v;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Inverted dropout: surviving entries are scaled by 1/(1-p) at train time so
// inference is an identity map.

template <class T>
struct DropoutCtx {
  TensorT<T> mask;  // 0 for dropped entries, 1/(1-p) for kept ones
  bool identity{false};
  bool used{false};
};

template <class T>
std::pair<TensorT<T>, DropoutCtx<T>> dropout_forward(const TensorT<T>& x, double p, Mode mode,
                                                     Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(p));
  }
  if (mode == Mode::kInfer || p == 0.0) {
    DropoutCtx<T> ctx{TensorT<T>(), true, false};
    return {x, std::move(ctx)};
  }
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  TensorT<T> mask(x.shape());
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const T keep = rng.next_double() >= p ? scale : T(0);
    mask[i] = keep;
    y[i] = x[i] * keep;
  }
  DropoutCtx<T> ctx{std::move(mask), false, false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
TensorT<T> dropout_backward(DropoutCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "dropout");
  if (ctx.identity) return cotangent;
  detail::check_cotangent(cotangent, ctx.mask.shape(), "dropout");
  TensorT<T> gx(cotangent.shape());
  for (int64_t i = 0; i < gx.size(); ++i) gx[i] = cotangent[i] * ctx.mask[i];
  return gx;
}

// ---------------------------------------------------------------------------
// Dense layer y = x*w + b with the bias broadcast over rows.

template <class T>
struct DenseCtx {
  TensorT<T> input;   // [N,F]
  TensorT<T> weight;  // [F,U]
  bool used{false};
};

template <class T>
struct DenseGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <class T>
std::pair<TensorT<T>, DenseCtx<T>> dense_forward(const TensorT<T>& x, const TensorT<T>& w,
                                                 const TensorT<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
    throw std::invalid_argument("dense expects x [N,F], w [F,U], b [U]; got " +
                                shape_to_string(x.shape()) + ", " + shape_to_string(w.shape()) +
                                ", " + shape_to_string(b.shape()));
  }
  if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
    throw std::invalid_argument("dense shape mismatch: x " + shape_to_string(x.shape()) +
                                ", w " + shape_to_string(w.shape()) + ", b " +
                                shape_to_string(b.shape()));
  }
  TensorT<T> y = matmul(x, w);
  const int64_t n = y.dim(0), u = y.dim(1);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < u; ++j) y[i * u + j] += b[j];
  DenseCtx<T> ctx{x, w, false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
DenseGrads<T> dense_backward(DenseCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "dense");
  Shape want{ctx.input.dim(0), ctx.weight.dim(1)};
  detail::check_cotangent(cotangent, want, "dense");
  TensorT<T> gx = matmul(cotangent, transposed(ctx.weight));
  TensorT<T> gw = matmul(transposed(ctx.input), cotangent);
  const int64_t n = cotangent.dim(0), u = cotangent.dim(1);
  TensorT<T> gb({u});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < u; ++j) gb[j] += cotangent[i * u + j];
  return {std::move(gx), std::move(gw), std::move(gb)};
}

// ---------------------------------------------------------------------------
// Activations. ELU uses alpha = 1.

template <class T>
struct ActCtx {
  TensorT<T> input;
  bool used{false};
};

template <class T>
TensorT<T> elu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > T(0) ? x[i] : static_cast<T>(std::expm1(static_cast<double>(x[i])));
  }
  return y;
}

template <class T>
std::pair<TensorT<T>, ActCtx<T>> elu_forward(const TensorT<T>& x) {
  return {elu(x), ActCtx<T>{x, false}};
}

template <class T>
TensorT<T> elu_backward(ActCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "elu");
  detail::check_cotangent(cotangent, ctx.input.shape(), "elu");
  TensorT<T> gx(ctx.input.shape());
  for (int64_t i = 0; i < gx.size(); ++i) {
    const T x = ctx.input[i];
    gx[i] = x > T(0) ? cotangent[i]
                     : static_cast<T>(cotangent[i] * std::exp(static_cast<double>(x)));
  }
  return gx;
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <class T>
std::pair<TensorT<T>, ActCtx<T>> relu_forward(const TensorT<T>& x) {
  return {relu(x), ActCtx<T>{x, false}};
}

template <class T>
TensorT<T> relu_backward(ActCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "relu");
  detail::check_cotangent(cotangent, ctx.input.shape(), "relu");
  TensorT<T> gx(ctx.input.shape());
  for (int64_t i = 0; i < gx.size(); ++i) {
    gx[i] = ctx.input[i] > T(0) ? cotangent[i] : T(0);
  }
  return gx;
}

}  // namespace sten
