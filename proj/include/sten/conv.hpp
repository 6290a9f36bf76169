#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "sten/tensor.hpp"

namespace sten {

enum class Padding { kValid, kSame };

// Kernel geometry for a convolution layer. Same-padding preserves spatial
// dimensions; valid-padding output dims are in - kernel + 1 per axis.
struct ConvSpec {
  int64_t out_channels{1};
  int64_t kernel_h{1};
  int64_t kernel_w{1};
  Padding padding{Padding::kValid};
  int64_t depth_multiplier{1};  // depthwise only

  std::pair<int64_t, int64_t> output_dims(int64_t in_h, int64_t in_w) const {
    if (padding == Padding::kSame) return {in_h, in_w};
    const int64_t oh = in_h - kernel_h + 1;
    const int64_t ow = in_w - kernel_w + 1;
    if (oh < 1 || ow < 1) {
      throw std::invalid_argument("valid-padding output would be " + std::to_string(oh) + "x" +
                                  std::to_string(ow) + " for kernel " + std::to_string(kernel_h) +
                                  "x" + std::to_string(kernel_w) + " on input " +
                                  std::to_string(in_h) + "x" + std::to_string(in_w));
    }
    return {oh, ow};
  }
};

// Leading zero-pad for same mode; the extra cell goes on the trailing side
// when kernel - 1 is odd.
inline int64_t same_pad_lead(int64_t kernel) { return (kernel - 1) / 2; }

inline int64_t conv_out_dim(int64_t in, int64_t kernel, Padding padding) {
  if (padding == Padding::kSame) return in;
  return in - kernel + 1;
}

namespace detail {

inline void check_conv_input(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw std::invalid_argument(std::string(op) + " expects input [N,C,H,W], got " +
                                shape_to_string(shape));
  }
}

inline void throw_if_used(bool& used, const char* op) {
  if (used) throw std::logic_error(std::string(op) + " backward called twice on one context");
  used = true;
}

template <class T>
void check_cotangent(const TensorT<T>& cotangent, const Shape& want, const char* op) {
  if (cotangent.shape() != want) {
    throw std::invalid_argument(std::string(op) + " cotangent shape " +
                                shape_to_string(cotangent.shape()) +
                                " does not match forward output " + shape_to_string(want));
  }
}

}  // namespace detail

template <class T>
struct Conv2dCtx {
  TensorT<T> input;   // [N,Cin,H,W]
  TensorT<T> kernel;  // [Cout,Cin,kh,kw]
  Padding padding{Padding::kValid};
  Shape out_shape;
  bool used{false};
};

template <class T>
struct Conv2dGrads {
  TensorT<T> input;
  TensorT<T> kernel;
};

// 2-D cross-correlation (no kernel flip, no bias) in NCHW layout.
// Same mode zero-pads symmetrically with the extra cell on the trailing side.
template <class T>
std::pair<TensorT<T>, Conv2dCtx<T>> conv2d_forward(const TensorT<T>& x,
                                                   const TensorT<T>& kernel,
                                                   Padding padding) {
  detail::check_conv_input(x.shape(), "conv2d");
  if (kernel.rank() != 4) {
    throw std::invalid_argument("conv2d expects kernel [Cout,Cin,kh,kw], got " +
                                shape_to_string(kernel.shape()));
  }
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw std::invalid_argument("conv2d kernel expects " + std::to_string(kernel.dim(1)) +
                                " input channels, input has " + std::to_string(cin));
  }
  if (padding == Padding::kValid && (kh > h || kw > w)) {
    throw std::invalid_argument("conv2d kernel " + std::to_string(kh) + "x" +
                                std::to_string(kw) + " larger than input " + std::to_string(h) +
                                "x" + std::to_string(w) + " in valid mode");
  }
  const int64_t oh = conv_out_dim(h, kh, padding);
  const int64_t ow = conv_out_dim(w, kw, padding);
  const int64_t ph = padding == Padding::kSame ? same_pad_lead(kh) : 0;
  const int64_t pw = padding == Padding::kSame ? same_pad_lead(kw) : 0;

  TensorT<T> y({n, cout, oh, ow});
  const T* px = x.data();
  const T* pk = kernel.data();
  T* py = y.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t co = 0; co < cout; ++co) {
      T* yplane = py + ((in * cout + co) * oh) * ow;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const T* xplane = px + ((in * cin + ci) * h) * w;
        const T* kplane = pk + ((co * cin + ci) * kh) * kw;
        for (int64_t r = 0; r < oh; ++r) {
          for (int64_t fr = 0; fr < kh; ++fr) {
            const int64_t ih = r + fr - ph;
            if (ih < 0 || ih >= h) continue;
            const T* xrow = xplane + ih * w;
            T* yrow = yplane + r * ow;
            const T* krow = kplane + fr * kw;
            for (int64_t fc = 0; fc < kw; ++fc) {
              const T kval = krow[fc];
              const int64_t shift = fc - pw;
              const int64_t lo = std::max<int64_t>(0, -shift);
              const int64_t hi = std::min<int64_t>(ow, w - shift);
              const T* xs = xrow + shift;
              for (int64_t c = lo; c < hi; ++c) yrow[c] += kval * xs[c];
            }
          }
        }
      }
    }
  }
  Conv2dCtx<T> ctx{x, kernel, padding, y.shape(), false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
Conv2dGrads<T> conv2d_backward(Conv2dCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "conv2d");
  detail::check_cotangent(cotangent, ctx.out_shape, "conv2d");
  const TensorT<T>& x = ctx.input;
  const TensorT<T>& kernel = ctx.kernel;
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int64_t oh = cotangent.dim(2), ow = cotangent.dim(3);
  const int64_t ph = ctx.padding == Padding::kSame ? same_pad_lead(kh) : 0;
  const int64_t pw = ctx.padding == Padding::kSame ? same_pad_lead(kw) : 0;

  TensorT<T> gx(x.shape());
  TensorT<T> gk(kernel.shape());
  const T* px = x.data();
  const T* pk = kernel.data();
  const T* pg = cotangent.data();
  T* pgx = gx.data();
  T* pgk = gk.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t co = 0; co < cout; ++co) {
      const T* gplane = pg + ((in * cout + co) * oh) * ow;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const T* xplane = px + ((in * cin + ci) * h) * w;
        T* gxplane = pgx + ((in * cin + ci) * h) * w;
        const T* kplane = pk + ((co * cin + ci) * kh) * kw;
        T* gkplane = pgk + ((co * cin + ci) * kh) * kw;
        for (int64_t r = 0; r < oh; ++r) {
          for (int64_t fr = 0; fr < kh; ++fr) {
            const int64_t ih = r + fr - ph;
            if (ih < 0 || ih >= h) continue;
            const T* xrow = xplane + ih * w;
            T* gxrow = gxplane + ih * w;
            const T* grow = gplane + r * ow;
            const T* krow = kplane + fr * kw;
            T* gkrow = gkplane + fr * kw;
            for (int64_t fc = 0; fc < kw; ++fc) {
              const int64_t shift = fc - pw;
              const int64_t lo = std::max<int64_t>(0, -shift);
              const int64_t hi = std::min<int64_t>(ow, w - shift);
              const T kval = krow[fc];
              T acc = T(0);
              const T* xs = xrow + shift;
              T* gxs = gxrow + shift;
              for (int64_t c = lo; c < hi; ++c) {
                gxs[c] += kval * grow[c];
                acc += grow[c] * xs[c];
              }
              gkrow[fc] += acc;
            }
          }
        }
      }
    }
  }
  return {std::move(gx), std::move(gk)};
}

template <class T>
struct DepthwiseCtx {
  TensorT<T> input;   // [N,C,H,W]
  TensorT<T> kernel;  // [C,D,kh,kw]
  int64_t pad_h{0};
  int64_t pad_w{0};
  Shape out_shape;
  bool used{false};
};

template <class T>
struct DepthwiseGrads {
  TensorT<T> input;
  TensorT<T> kernel;
};

namespace detail {

// Shared depthwise core with explicit leading pads; output dims are
// in + pad_total - kernel + 1 where pad_total = 2*pad or kernel-1 for same.
template <class T>
TensorT<T> depthwise_core(const TensorT<T>& x, const TensorT<T>& kernel, int64_t ph,
                          int64_t pw, int64_t oh, int64_t ow) {
  const int64_t n = x.dim(0), cn = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t d = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  TensorT<T> y({n, cn * d, oh, ow});
  const T* px = x.data();
  const T* pk = kernel.data();
  T* py = y.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ci = 0; ci < cn; ++ci) {
      const T* xplane = px + ((in * cn + ci) * h) * w;
      for (int64_t dm = 0; dm < d; ++dm) {
        T* yplane = py + ((in * cn * d + ci * d + dm) * oh) * ow;
        const T* kplane = pk + ((ci * d + dm) * kh) * kw;
        for (int64_t r = 0; r < oh; ++r) {
          for (int64_t fr = 0; fr < kh; ++fr) {
            const int64_t ih = r + fr - ph;
            if (ih < 0 || ih >= h) continue;
            const T* xrow = xplane + ih * w;
            T* yrow = yplane + r * ow;
            const T* krow = kplane + fr * kw;
            for (int64_t fc = 0; fc < kw; ++fc) {
              const T kval = krow[fc];
              const int64_t shift = fc - pw;
              const int64_t lo = std::max<int64_t>(0, -shift);
              const int64_t hi = std::min<int64_t>(ow, w - shift);
              const T* xs = xrow + shift;
              for (int64_t c = lo; c < hi; ++c) yrow[c] += kval * xs[c];
            }
          }
        }
      }
    }
  }
  return y;
}

}  // namespace detail

// Depthwise convolution, valid padding: each input channel is convolved with
// its own D kernels and output channel c*D + d depends only on input channel
// c. No bias.
template <class T>
std::pair<TensorT<T>, DepthwiseCtx<T>> depthwise_conv2d_forward(const TensorT<T>& x,
                                                                const TensorT<T>& kernel) {
  detail::check_conv_input(x.shape(), "depthwise_conv2d");
  if (kernel.rank() != 4) {
    throw std::invalid_argument("depthwise_conv2d expects kernel [C,D,kh,kw], got " +
                                shape_to_string(kernel.shape()));
  }
  const int64_t h = x.dim(2), w = x.dim(3);
  const int64_t kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != x.dim(1)) {
    throw std::invalid_argument("depthwise_conv2d kernel expects " +
                                std::to_string(kernel.dim(0)) + " channels, input has " +
                                std::to_string(x.dim(1)));
  }
  if (kh > h || kw > w) {
    throw std::invalid_argument("depthwise_conv2d kernel " + std::to_string(kh) + "x" +
                                std::to_string(kw) + " larger than input " + std::to_string(h) +
                                "x" + std::to_string(w));
  }
  TensorT<T> y = detail::depthwise_core(x, kernel, 0, 0, h - kh + 1, w - kw + 1);
  DepthwiseCtx<T> ctx{x, kernel, 0, 0, y.shape(), false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
DepthwiseGrads<T> depthwise_conv2d_backward(DepthwiseCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "depthwise_conv2d");
  detail::check_cotangent(cotangent, ctx.out_shape, "depthwise_conv2d");
  const TensorT<T>& x = ctx.input;
  const TensorT<T>& kernel = ctx.kernel;
  const int64_t n = x.dim(0), cn = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t d = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const int64_t oh = cotangent.dim(2), ow = cotangent.dim(3);
  const int64_t ph = ctx.pad_h, pw = ctx.pad_w;

  TensorT<T> gx(x.shape());
  TensorT<T> gk(kernel.shape());
  const T* px = x.data();
  const T* pk = kernel.data();
  const T* pg = cotangent.data();
  T* pgx = gx.data();
  T* pgk = gk.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ci = 0; ci < cn; ++ci) {
      const T* xplane = px + ((in * cn + ci) * h) * w;
      T* gxplane = pgx + ((in * cn + ci) * h) * w;
      for (int64_t dm = 0; dm < d; ++dm) {
        const T* gplane = pg + ((in * cn * d + ci * d + dm) * oh) * ow;
        const T* kplane = pk + ((ci * d + dm) * kh) * kw;
        T* gkplane = pgk + ((ci * d + dm) * kh) * kw;
        for (int64_t r = 0; r < oh; ++r) {
          for (int64_t fr = 0; fr < kh; ++fr) {
            const int64_t ih = r + fr - ph;
            if (ih < 0 || ih >= h) continue;
            const T* xrow = xplane + ih * w;
            T* gxrow = gxplane + ih * w;
            const T* grow = gplane + r * ow;
            const T* krow = kplane + fr * kw;
            T* gkrow = gkplane + fr * kw;
            for (int64_t fc = 0; fc < kw; ++fc) {
              const int64_t shift = fc - pw;
              const int64_t lo = std::max<int64_t>(0, -shift);
              const int64_t hi = std::min<int64_t>(ow, w - shift);
              const T kval = krow[fc];
              T acc = T(0);
              const T* xs = xrow + shift;
              T* gxs = gxrow + shift;
              for (int64_t c = lo; c < hi; ++c) {
                gxs[c] += kval * grow[c];
                acc += grow[c] * xs[c];
              }
              gkrow[fc] += acc;
            }
          }
        }
      }
    }
  }
  return {std::move(gx), std::move(gk)};
}

template <class T>
struct SeparableCtx {
  DepthwiseCtx<T> depth;
  Conv2dCtx<T> point;
  bool used{false};
};

template <class T>
struct SeparableGrads {
  TensorT<T> input;
  TensorT<T> depth_kernel;
  TensorT<T> point_kernel;
};

// Separable convolution: a per-channel depthwise stage with same padding over
// the time axis, followed by a 1x1 pointwise stage. Bit-identical to
// composing the two stage operations.
template <class T>
std::pair<TensorT<T>, SeparableCtx<T>> separable_conv2d_forward(const TensorT<T>& x,
                                                                const TensorT<T>& depth_kernel,
                                                                const TensorT<T>& point_kernel) {
  detail::check_conv_input(x.shape(), "separable_conv2d");
  if (depth_kernel.rank() != 4 || depth_kernel.dim(1) != 1 || depth_kernel.dim(2) != 1) {
    throw std::invalid_argument("separable_conv2d expects depth kernel [C,1,1,kw], got " +
                                shape_to_string(depth_kernel.shape()));
  }
  if (point_kernel.rank() != 4 || point_kernel.dim(2) != 1 || point_kernel.dim(3) != 1) {
    throw std::invalid_argument("separable_conv2d expects point kernel [Cout,C,1,1], got " +
                                shape_to_string(point_kernel.shape()));
  }
  const int64_t cn = x.dim(1);
  if (depth_kernel.dim(0) != cn) {
    throw std::invalid_argument("separable_conv2d depth kernel expects " +
                                std::to_string(depth_kernel.dim(0)) + " channels, input has " +
                                std::to_string(cn));
  }
  if (point_kernel.dim(1) != cn) {
    throw std::invalid_argument("separable_conv2d channel mismatch between stages: depthwise "
                                "produces " +
                                std::to_string(cn) + " channels, pointwise expects " +
                                std::to_string(point_kernel.dim(1)));
  }
  const int64_t kw = depth_kernel.dim(3);
  const int64_t pw = same_pad_lead(kw);
  TensorT<T> mid =
      detail::depthwise_core(x, depth_kernel, 0, pw, x.dim(2), x.dim(3));
  DepthwiseCtx<T> dctx{x, depth_kernel, 0, pw, mid.shape(), false};
  auto [y, pctx] = conv2d_forward(mid, point_kernel, Padding::kValid);
  SeparableCtx<T> ctx{std::move(dctx), std::move(pctx), false};
  return {std::move(y), std::move(ctx)};
}

template <class T>
SeparableGrads<T> separable_conv2d_backward(SeparableCtx<T>& ctx, const TensorT<T>& cotangent) {
  detail::throw_if_used(ctx.used, "separable_conv2d");
  Conv2dGrads<T> pg = conv2d_backward(ctx.point, cotangent);
  DepthwiseGrads<T> dg = depthwise_conv2d_backward(ctx.depth, pg.input);
  return {std::move(dg.input), std::move(dg.kernel), std::move(pg.kernel)};
}

}  // namespace sten
