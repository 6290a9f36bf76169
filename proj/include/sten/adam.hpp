#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sten/model.hpp"
#include "sten/tensor.hpp"

namespace sten {

// First and second moment estimates aligned with ModelParams::entries;
// non-trainable slots stay empty. t counts completed steps.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t{0};
};

inline AdamState init_adam(const ModelParams& params) {
  AdamState state;
  state.m.resize(params.entries.size());
  state.v.resize(params.entries.size());
  for (size_t i = 0; i < params.entries.size(); ++i) {
    if (params.entries[i].trainable) {
      state.m[i] = Tensor(params.entries[i].value.shape(), 0.0f);
      state.v[i] = Tensor(params.entries[i].value.shape(), 0.0f);
    }
  }
  return state;
}

// One Adam update:
//   t' = t+1; m' = b1*m + (1-b1)*g; v' = b2*v + (1-b2)*g^2;
//   mhat = m'/(1-b1^t'); vhat = v'/(1-b2^t');
//   theta' = theta - lr * mhat / (sqrt(vhat) + eps)
inline void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, float lr,
                      float beta1, float beta2, float eps) {
  if (grads.by_entry.size() != params.entries.size()) {
    throw std::invalid_argument("adam_step gradient count " +
                                std::to_string(grads.by_entry.size()) + " does not match " +
                                std::to_string(params.entries.size()) + " parameter entries");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(state.t));
  for (size_t i = 0; i < params.entries.size(); ++i) {
    ParamEntry& e = params.entries[i];
    if (!e.trainable) continue;
    const Tensor& g = grads.by_entry[i];
    if (!g.same_shape(e.value)) {
      throw std::invalid_argument("adam_step gradient for '" + e.name + "' has shape " +
                                  shape_to_string(g.shape()) + ", parameter is " +
                                  shape_to_string(e.value.shape()));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (int64_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw std::runtime_error("adam_step got a non-finite gradient for parameter '" + e.name +
                                 "'");
      }
      m[j] = beta1 * m[j] + (1.0f - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0f - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      e.value[j] = static_cast<float>(e.value[j] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace sten
