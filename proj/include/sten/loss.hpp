#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sten/tensor.hpp"

namespace sten {

template <class T>
struct SoftmaxXentResult {
  double loss{0.0};          // mean over the batch of -log p[label]
  TensorT<T> grad_logits;    // (probs - onehot) / N
  TensorT<T> probs;          // rows sum to 1
};

// Fused softmax + sparse categorical cross-entropy, numerically stabilized by
// subtracting the per-row max before exponentiation.
template <class T>
SoftmaxXentResult<T> softmax_xent(const TensorT<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_xent expects logits [N,K], got " +
                                shape_to_string(logits.shape()));
  }
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw std::invalid_argument("softmax_xent got " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  }
  TensorT<T> probs(logits.shape());
  TensorT<T> grad(logits.shape());
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    if (label < 0 || label >= k) {
      throw std::invalid_argument("softmax_xent label " + std::to_string(label) +
                                  " out of range [0," + std::to_string(k) + ") at row " +
                                  std::to_string(i));
    }
    const T* row = logits.data() + i * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max<double>(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const double log_denom = std::log(denom);
    for (int64_t j = 0; j < k; ++j) {
      const double logp = static_cast<double>(row[j]) - mx - log_denom;
      const double p = std::exp(logp);
      probs[i * k + j] = static_cast<T>(p);
      grad[i * k + j] = static_cast<T>((p - (j == label ? 1.0 : 0.0)) / static_cast<double>(n));
      if (j == label) loss -= logp;
    }
  }
  loss /= static_cast<double>(n);
  return {loss, std::move(grad), std::move(probs)};
}

}  // namespace sten
