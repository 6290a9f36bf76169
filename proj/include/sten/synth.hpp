#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sten/epochs.hpp"
#include "sten/rng.hpp"

namespace sten {

// Class signal of the generator: a 10 Hz oscillation burst on the posterior
// channels of High-valence trials.
inline constexpr double kSynthBurstHz = 10.0;

// The last quarter of the channel axis plays the role of the posterior
// electrodes; returns [first, last) channel indices.
inline std::pair<int64_t, int64_t> synthetic_burst_channels(int64_t n_channels) {
  const int64_t count = std::max<int64_t>(1, n_channels / 4);
  return {n_channels - count, n_channels};
}

namespace detail {

// Background noise amplitude per spectral component (microvolts) and the
// burst amplitude, sized so the 8-12 Hz bandpower of High trials exceeds Low
// trials several-fold on the posterior channels.
inline constexpr double kSynthNoiseScale = 5.0;
inline constexpr double kSynthBurstAmplitude = 28.0;

}  // namespace detail

// Synthetic stand-in for a naturalistic-EEG epoch set. Per subject, a fixed
// random channel gain vector models inter-subject variability; per trial the
// background is 1/f-shaped noise built from random-phase sinusoids between
// 1 Hz and 45 Hz; High-class trials add a Hann-windowed 10 Hz burst on the
// posterior channels. Valence draws keep the classes balanced within one
// trial per subject. Identical seeds give bit-identical sets.
inline EpochSet generate_synthetic(int64_t n_subjects, int64_t trials_per_subject,
                                   int64_t n_channels, int64_t n_samples,
                                   float sample_rate_hz, uint64_t seed) {
  if (n_subjects < 1 || trials_per_subject < 1 || n_channels < 1 || n_samples < 1) {
    throw std::invalid_argument("generate_synthetic requires all counts >= 1");
  }
  if (!(sample_rate_hz > 0.0f)) {
    throw std::invalid_argument("generate_synthetic requires a positive sample rate");
  }
  const int64_t n_trials = n_subjects * trials_per_subject;
  EpochSet es;
  es.sample_rate_hz = sample_rate_hz;
  es.trials = Tensor({n_trials, n_channels, n_samples});
  es.subject_ids.resize(static_cast<size_t>(n_trials));
  es.valence.resize(static_cast<size_t>(n_trials));

  // Spectral components at DFT-bin spacing, restricted to the EEG band.
  const double df = static_cast<double>(sample_rate_hz) / static_cast<double>(n_samples);
  const int64_t k_lo = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(1.0 / df)));
  const int64_t k_hi =
      std::min<int64_t>(n_samples / 2 - 1, static_cast<int64_t>(std::floor(45.0 / df)));
  std::vector<double> comp_step_re, comp_step_im, comp_amp;
  for (int64_t k = k_lo; k <= k_hi; ++k) {
    const double f = static_cast<double>(k) * df;
    const double dphi = 2.0 * std::numbers::pi * f / sample_rate_hz;
    comp_step_re.push_back(std::cos(dphi));
    comp_step_im.push_back(std::sin(dphi));
    comp_amp.push_back(detail::kSynthNoiseScale / std::sqrt(f));
  }
  if (comp_amp.empty()) {  // degenerate very-short trials: one component at df
    comp_step_re.push_back(std::cos(2.0 * std::numbers::pi * df / sample_rate_hz));
    comp_step_im.push_back(std::sin(2.0 * std::numbers::pi * df / sample_rate_hz));
    comp_amp.push_back(detail::kSynthNoiseScale);
  }

  const auto [burst_first, burst_last] = synthetic_burst_channels(n_channels);
  const int64_t burst_start = n_samples / 5;
  const int64_t burst_len = std::max<int64_t>(1, (3 * n_samples) / 5);
  const double burst_dphi = 2.0 * std::numbers::pi * kSynthBurstHz / sample_rate_hz;

  Rng rng(seed);
  std::vector<double> gain(static_cast<size_t>(n_channels));
  std::vector<int> classes(static_cast<size_t>(trials_per_subject));
  std::vector<double> signal(static_cast<size_t>(n_samples));

  int64_t trial = 0;
  for (int64_t s = 0; s < n_subjects; ++s) {
    for (int64_t c = 0; c < n_channels; ++c) {
      gain[static_cast<size_t>(c)] = std::exp(0.15 * rng.next_normal());
    }
    // Balanced class sequence, odd remainder decided by a coin.
    const int64_t n_high =
        trials_per_subject / 2 + ((trials_per_subject % 2) ? (rng.next_u64() & 1) : 0);
    for (int64_t t = 0; t < trials_per_subject; ++t) classes[static_cast<size_t>(t)] = t < n_high;
    for (int64_t i = trials_per_subject - 1; i > 0; --i) {
      const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
      std::swap(classes[static_cast<size_t>(i)], classes[static_cast<size_t>(j)]);
    }

    for (int64_t t = 0; t < trials_per_subject; ++t, ++trial) {
      const int label = classes[static_cast<size_t>(t)];
      es.subject_ids[static_cast<size_t>(trial)] = static_cast<uint32_t>(s + 1);
      es.valence[static_cast<size_t>(trial)] =
          static_cast<float>(label ? 5.0 + 4.0 * rng.next_double() : 1.0 + 4.0 * rng.next_double());
      const double burst_phase = 2.0 * std::numbers::pi * rng.next_double();

      for (int64_t c = 0; c < n_channels; ++c) {
        std::fill(signal.begin(), signal.end(), 0.0);
        for (size_t k = 0; k < comp_amp.size(); ++k) {
          const double phase = 2.0 * std::numbers::pi * rng.next_double();
          double zr = std::cos(phase), zi = std::sin(phase);
          const double sr = comp_step_re[k], si = comp_step_im[k];
          const double amp = comp_amp[k];
          for (int64_t i = 0; i < n_samples; ++i) {
            signal[static_cast<size_t>(i)] += amp * zr;
            const double nr = zr * sr - zi * si;
            zi = zr * si + zi * sr;
            zr = nr;
          }
        }
        if (label == 1 && c >= burst_first && c < burst_last) {
          for (int64_t i = 0; i < burst_len; ++i) {
            const int64_t at = burst_start + i;
            if (at >= n_samples) break;
            const double hann =
                0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(std::max<int64_t>(1, burst_len - 1))));
            signal[static_cast<size_t>(at)] +=
                detail::kSynthBurstAmplitude * hann *
                std::sin(burst_dphi * static_cast<double>(at) + burst_phase);
          }
        }
        float* row = es.trial(trial) + c * n_samples;
        const double g = gain[static_cast<size_t>(c)];
        for (int64_t i = 0; i < n_samples; ++i) {
          row[i] = static_cast<float>(g * signal[static_cast<size_t>(i)]);
        }
      }
    }
  }
  return es;
}

}  // namespace sten
