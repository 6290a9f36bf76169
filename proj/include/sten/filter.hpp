#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sten/epochs.hpp"

namespace sten {

// Linear-phase windowed-sinc bandpass: difference of two Hamming-windowed
// lowpass sincs, odd tap count. At 125 Hz and 251 taps the transition width
// is about 1.6 Hz, adequate for a 1 Hz low edge.
inline std::vector<double> design_bandpass_fir(double low_hz, double high_hz,
                                               double sample_rate_hz, int taps = 251) {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0)) {
    throw std::invalid_argument("bandpass band " + std::to_string(low_hz) + "-" +
                                std::to_string(high_hz) + " Hz outside (0, Nyquist) at " +
                                std::to_string(sample_rate_hz) + " Hz sampling");
  }
  if (taps < 3 || taps % 2 == 0) {
    throw std::invalid_argument("bandpass needs an odd tap count >= 3, got " +
                                std::to_string(taps));
  }
  const double f1 = low_hz / sample_rate_hz;   // normalized cutoffs
  const double f2 = high_hz / sample_rate_hz;
  const int mid = (taps - 1) / 2;
  auto sinc = [](double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
  };
  std::vector<double> h(static_cast<size_t>(taps));
  for (int i = 0; i < taps; ++i) {
    const double m = i - mid;
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(taps - 1));
    h[static_cast<size_t>(i)] =
        window * (2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m));
  }
  return h;
}

namespace detail {

// Symmetric extension (edge sample repeated), valid for any pad length.
inline int64_t reflect_index(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// One zero-phase pass of a symmetric odd-length kernel, centered, with
// symmetric edge padding; output length equals input length.
inline void filter_pass(const std::vector<double>& x, const std::vector<double>& h,
                        std::vector<double>& y) {
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t taps = static_cast<int64_t>(h.size());
  const int64_t mid = (taps - 1) / 2;
  y.resize(x.size());
  for (int64_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int64_t j = 0; j < taps; ++j) {
      acc += h[static_cast<size_t>(j)] *
             x[static_cast<size_t>(reflect_index(t + j - mid, n))];
    }
    y[static_cast<size_t>(t)] = acc;
  }
}

}  // namespace detail

// Applies the FIR forward and backward over every channel of every trial for
// zero net phase; length is preserved via symmetric edge padding.
inline EpochSet bandpass_filter(EpochSet es, double low_hz, double high_hz) {
  es.validate();
  const std::vector<double> h = design_bandpass_fir(low_hz, high_hz, es.sample_rate_hz);
  const int64_t samples = es.n_samples();
  const int64_t rows = es.n_trials() * es.n_channels();
  std::vector<double> x(static_cast<size_t>(samples));
  std::vector<double> once, twice;
  for (int64_t r = 0; r < rows; ++r) {
    float* row = es.trials.data() + r * samples;
    for (int64_t i = 0; i < samples; ++i) x[static_cast<size_t>(i)] = row[i];
    detail::filter_pass(x, h, once);
    std::reverse(once.begin(), once.end());
    detail::filter_pass(once, h, twice);
    std::reverse(twice.begin(), twice.end());
    for (int64_t i = 0; i < samples; ++i) row[i] = static_cast<float>(twice[static_cast<size_t>(i)]);
  }
  return es;
}

}  // namespace sten
