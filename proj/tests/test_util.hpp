#pragma once

// Test-side oracles, independent of the library's signal paths: direct DFT
// amplitude and bandpower measurements.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace testutil {

// Single-frequency DFT amplitude of a real signal (2/n normalization, so a
// unit-amplitude in-bin sine measures 1).
inline double dft_amplitude(const float* x, int64_t n, double freq_hz, double rate_hz) {
  double re = 0.0, im = 0.0;
  const double w = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  for (int64_t t = 0; t < n; ++t) {
    re += x[t] * std::cos(w * static_cast<double>(t));
    im -= x[t] * std::sin(w * static_cast<double>(t));
  }
  return 2.0 * std::sqrt(re * re + im * im) / static_cast<double>(n);
}

// Sum of squared DFT amplitudes over the bins whose frequency lies in
// [lo_hz, hi_hz].
inline double bandpower(const float* x, int64_t n, double lo_hz, double hi_hz, double rate_hz) {
  const double df = rate_hz / static_cast<double>(n);
  double power = 0.0;
  for (int64_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * df;
    if (f < lo_hz || f > hi_hz) continue;
    const double a = dft_amplitude(x, n, f, rate_hz);
    power += a * a;
  }
  return power;
}

}  // namespace testutil
