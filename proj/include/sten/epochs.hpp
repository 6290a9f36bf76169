#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sten/rng.hpp"
#include "sten/tensor.hpp"

namespace sten {

// A collection of EEG trials with per-trial subject id and valence rating.
// Trials are [n_trials, n_channels, n_samples] in microvolt-scale units; a
// subject id may own many trials.
struct EpochSet {
  Tensor trials;
  std::vector<uint32_t> subject_ids;
  std::vector<float> valence;  // ratings in [1, 9]
  float sample_rate_hz{125.0f};

  int64_t n_trials() const { return trials.rank() == 3 ? trials.dim(0) : 0; }
  int64_t n_channels() const { return trials.rank() == 3 ? trials.dim(1) : 0; }
  int64_t n_samples() const { return trials.rank() == 3 ? trials.dim(2) : 0; }

  const float* trial(int64_t t) const { return trials.data() + t * n_channels() * n_samples(); }
  float* trial(int64_t t) { return trials.data() + t * n_channels() * n_samples(); }

  void validate() const {
    if (trials.rank() != 3) {
      throw std::invalid_argument("epoch set trials must be [n_trials,n_channels,n_samples], got " +
                                  shape_to_string(trials.shape()));
    }
    if (n_trials() < 1) throw std::invalid_argument("epoch set needs at least one trial");
    if (static_cast<int64_t>(subject_ids.size()) != n_trials() ||
        static_cast<int64_t>(valence.size()) != n_trials()) {
      throw std::invalid_argument("epoch set has " + std::to_string(n_trials()) + " trials but " +
                                  std::to_string(subject_ids.size()) + " subject ids and " +
                                  std::to_string(valence.size()) + " valence ratings");
    }
    for (size_t i = 0; i < valence.size(); ++i) {
      if (!(valence[i] >= 1.0f && valence[i] <= 9.0f)) {
        throw std::invalid_argument("valence rating " + std::to_string(valence[i]) +
                                    " outside [1,9] at trial " + std::to_string(i));
      }
    }
  }
};

struct LabeledSet {
  EpochSet epochs;
  std::vector<int> labels;  // 0 = Low, 1 = High
};

// Subject-disjoint train/val/test partition.
struct LabeledSplit {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
};

// Valence binarization: High iff rating >= 5, else Low. The 1-5 and 5-9
// rating bins overlap at exactly 5; the midpoint maps to High.
inline std::vector<int> binarize_valence(const std::vector<float>& ratings) {
  std::vector<int> labels(ratings.size());
  for (size_t i = 0; i < ratings.size(); ++i) {
    if (!(ratings[i] >= 1.0f && ratings[i] <= 9.0f)) {
      throw std::invalid_argument("valence rating " + std::to_string(ratings[i]) +
                                  " outside [1,9] at index " + std::to_string(i));
    }
    labels[i] = ratings[i] >= 5.0f ? 1 : 0;
  }
  return labels;
}

namespace detail {

inline EpochSet gather_trials(const EpochSet& es, const std::vector<int64_t>& keep) {
  EpochSet out;
  out.sample_rate_hz = es.sample_rate_hz;
  out.trials = Tensor({static_cast<int64_t>(keep.size()), es.n_channels(), es.n_samples()});
  out.subject_ids.reserve(keep.size());
  out.valence.reserve(keep.size());
  const int64_t span = es.n_channels() * es.n_samples();
  for (size_t i = 0; i < keep.size(); ++i) {
    std::memcpy(out.trials.data() + static_cast<int64_t>(i) * span, es.trial(keep[i]),
                static_cast<size_t>(span) * sizeof(float));
    out.subject_ids.push_back(es.subject_ids[static_cast<size_t>(keep[i])]);
    out.valence.push_back(es.valence[static_cast<size_t>(keep[i])]);
  }
  return out;
}

}  // namespace detail

// Shuffles the distinct subjects and partitions them so the id sets of train,
// val and test are pairwise disjoint; every trial follows its subject. The
// fractions apply to subject counts (test of the whole, val of the remainder),
// rounded to nearest with at least one subject per split.
inline LabeledSplit split_subject_independent(const EpochSet& es, double test_fraction,
                                              double val_fraction, Rng& rng) {
  es.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0) ||
      !(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split fractions must lie strictly between 0 and 1");
  }
  std::set<uint32_t> distinct(es.subject_ids.begin(), es.subject_ids.end());
  std::vector<uint32_t> subjects(distinct.begin(), distinct.end());  // sorted, deterministic
  const int64_t n = static_cast<int64_t>(subjects.size());
  if (n < 3) {
    throw std::invalid_argument("subject-independent split needs at least 3 distinct subjects, got " +
                                std::to_string(n));
  }
  const std::vector<int64_t> order = shuffled_indices(rng, n);

  int64_t n_test = std::llround(static_cast<double>(n) * test_fraction);
  n_test = std::clamp<int64_t>(n_test, 1, n - 2);
  int64_t n_val = std::llround(static_cast<double>(n - n_test) * val_fraction);
  n_val = std::clamp<int64_t>(n_val, 1, n - n_test - 1);

  std::set<uint32_t> test_ids, val_ids;
  for (int64_t i = 0; i < n_test; ++i) test_ids.insert(subjects[static_cast<size_t>(order[i])]);
  for (int64_t i = n_test; i < n_test + n_val; ++i) {
    val_ids.insert(subjects[static_cast<size_t>(order[i])]);
  }

  std::vector<int64_t> train_keep, val_keep, test_keep;
  for (int64_t t = 0; t < es.n_trials(); ++t) {
    const uint32_t id = es.subject_ids[static_cast<size_t>(t)];
    if (test_ids.count(id)) {
      test_keep.push_back(t);
    } else if (val_ids.count(id)) {
      val_keep.push_back(t);
    } else {
      train_keep.push_back(t);
    }
  }

  LabeledSplit split;
  split.train.epochs = detail::gather_trials(es, train_keep);
  split.val.epochs = detail::gather_trials(es, val_keep);
  split.test.epochs = detail::gather_trials(es, test_keep);
  split.train.labels = binarize_valence(split.train.epochs.valence);
  split.val.labels = binarize_valence(split.val.epochs.valence);
  split.test.labels = binarize_valence(split.test.epochs.valence);
  return split;
}

// Per trial, per channel: subtract the mean and divide by the population
// standard deviation plus 1e-8 along the time axis.
inline EpochSet standardize(EpochSet es) {
  es.validate();
  const int64_t samples = es.n_samples();
  const int64_t rows = es.n_trials() * es.n_channels();
  for (int64_t r = 0; r < rows; ++r) {
    float* row = es.trials.data() + r * samples;
    double sum = 0.0;
    for (int64_t i = 0; i < samples; ++i) sum += row[i];
    const double mean = sum / static_cast<double>(samples);
    double sq = 0.0;
    for (int64_t i = 0; i < samples; ++i) {
      const double d = row[i] - mean;
      sq += d * d;
    }
    const double std = std::sqrt(sq / static_cast<double>(samples));
    const double inv = 1.0 / (std + 1e-8);
    for (int64_t i = 0; i < samples; ++i) {
      row[i] = static_cast<float>((row[i] - mean) * inv);
    }
  }
  return es;
}

// ---------------------------------------------------------------------------
// Epoch file, binary little-endian: magic "EEGE", version u32 = 1, n_trials
// u32, n_channels u32, n_samples u32, sample_rate f32; then per trial:
// subject_id u32, valence f32, payload n_channels*n_samples f32 row-major.

inline constexpr char kEpochMagic[4] = {'E', 'E', 'G', 'E'};
inline constexpr uint32_t kEpochVersion = 1;

inline void save_epochset(const EpochSet& es, const std::string& path) {
  es.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open epoch file '" + path + "' for writing");
  auto u32 = [&os](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  os.write(kEpochMagic, 4);
  u32(kEpochVersion);
  u32(static_cast<uint32_t>(es.n_trials()));
  u32(static_cast<uint32_t>(es.n_channels()));
  u32(static_cast<uint32_t>(es.n_samples()));
  os.write(reinterpret_cast<const char*>(&es.sample_rate_hz), 4);
  const int64_t span = es.n_channels() * es.n_samples();
  for (int64_t t = 0; t < es.n_trials(); ++t) {
    u32(es.subject_ids[static_cast<size_t>(t)]);
    os.write(reinterpret_cast<const char*>(&es.valence[static_cast<size_t>(t)]), 4);
    os.write(reinterpret_cast<const char*>(es.trial(t)),
             static_cast<std::streamsize>(span) * 4);
  }
  if (!os) throw std::runtime_error("failed writing epoch file '" + path + "'");
}

inline EpochSet load_epochset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open epoch file '" + path + "' for reading");
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEpochMagic, 4) != 0) {
    throw std::runtime_error("bad magic in epoch file '" + path + "'");
  }
  auto u32 = [&is, &path](const char* what) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) {
      throw std::runtime_error("epoch file '" + path + "' truncated while reading " + what);
    }
    return v;
  };
  const uint32_t version = u32("version");
  if (version != kEpochVersion) {
    throw std::runtime_error("unsupported epoch file version " + std::to_string(version) +
                             " (expected " + std::to_string(kEpochVersion) + ")");
  }
  const uint32_t n_trials = u32("trial count");
  const uint32_t n_channels = u32("channel count");
  const uint32_t n_samples = u32("sample count");
  EpochSet es;
  is.read(reinterpret_cast<char*>(&es.sample_rate_hz), 4);
  if (!is) throw std::runtime_error("epoch file '" + path + "' truncated while reading header");
  es.trials = Tensor({n_trials, n_channels, n_samples});
  es.subject_ids.resize(n_trials);
  es.valence.resize(n_trials);
  const int64_t span = static_cast<int64_t>(n_channels) * n_samples;
  for (uint32_t t = 0; t < n_trials; ++t) {
    is.read(reinterpret_cast<char*>(&es.subject_ids[t]), 4);
    is.read(reinterpret_cast<char*>(&es.valence[t]), 4);
    is.read(reinterpret_cast<char*>(es.trial(t)), static_cast<std::streamsize>(span) * 4);
    if (!is) {
      throw std::runtime_error("epoch file '" + path + "' truncated at trial " +
                               std::to_string(t));
    }
  }
  es.validate();
  return es;
}

// Human-inspection sidecar: one JSON object per line with trial index,
// subject id and valence. The binary file stays authoritative.
inline void save_epoch_manifest(const EpochSet& es, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open manifest '" + path + "' for writing");
  for (int64_t t = 0; t < es.n_trials(); ++t) {
    char line[128];
    std::snprintf(line, sizeof(line), "{\"trial\":%lld,\"subject\":%u,\"valence\":%.6g}\n",
                  static_cast<long long>(t), es.subject_ids[static_cast<size_t>(t)],
                  static_cast<double>(es.valence[static_cast<size_t>(t)]));
    os << line;
  }
}

}  // namespace sten
