#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sten/tensor.hpp"

namespace sten {

// Deterministic random number generation for the whole project.
//
// Algorithm: SplitMix64 (Steele, Lea & Flood 2014). The state advances by a
// fixed odd constant per draw and each output is a finalizing hash of the
// state, so the stream is a pure function of (seed, draw index) on every
// platform. Floating-point conversion, bounded integers and the normal
// transform are pinned here rather than delegated to <random>, whose
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe under log().
  double next_double_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal draw via Box-Muller; consumes exactly two u64 draws.
  double next_normal() {
    const double u1 = next_double_pos();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  uint64_t state_{0};
};

// I.i.d. normal draws with the given mean and standard deviation.
template <class T = float>
TensorT<T> rng_normal(Rng& rng, Shape shape, double mean, double std) {
  if (std < 0.0) {
    throw std::invalid_argument("rng_normal requires std >= 0, got " + std::to_string(std));
  }
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(mean + std * rng.next_normal());
  }
  return t;
}

// I.i.d. uniform draws in [lo, hi).
template <class T = float>
TensorT<T> rng_uniform(Rng& rng, Shape shape, double lo, double hi) {
  if (!(lo <= hi)) {
    throw std::invalid_argument("rng_uniform requires lo <= hi");
  }
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(lo + (hi - lo) * rng.next_double());
  }
  return t;
}

// Fisher-Yates permutation of [0, n); the draw sequence is fixed so the
// result depends only on (seed, call sequence).
inline std::vector<int64_t> shuffled_indices(Rng& rng, int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

}  // namespace sten
