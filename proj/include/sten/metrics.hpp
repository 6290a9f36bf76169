#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace sten {

// Classification report for the two-class valence task. The confusion matrix
// is indexed [actual][predicted]; the positive class for F1 is High (1).
struct MetricsReport {
  double accuracy{0.0};
  double f1{0.0};
  std::array<std::array<int64_t, 2>, 2> confusion{};
  int64_t n{0};
};

inline MetricsReport compute_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& actual) {
  if (predicted.size() != actual.size()) {
    throw std::invalid_argument("compute_metrics got " + std::to_string(predicted.size()) +
                                " predictions for " + std::to_string(actual.size()) + " labels");
  }
  if (predicted.empty()) {
    throw std::invalid_argument("compute_metrics needs at least one pair");
  }
  MetricsReport r;
  r.n = static_cast<int64_t>(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i], a = actual[i];
    if ((p != 0 && p != 1) || (a != 0 && a != 1)) {
      throw std::invalid_argument("compute_metrics labels must be 0 or 1, got predicted " +
                                  std::to_string(p) + ", actual " + std::to_string(a) +
                                  " at index " + std::to_string(i));
    }
    r.confusion[static_cast<size_t>(a)][static_cast<size_t>(p)] += 1;
  }
  const int64_t tp = r.confusion[1][1], tn = r.confusion[0][0];
  const int64_t fp = r.confusion[0][1], fn = r.confusion[1][0];
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(r.n);
  // F1 is 0 by convention when either denominator is empty, so degenerate
  // early-training evaluations stay total.
  if (tp + fp == 0 || tp + fn == 0) {
    r.f1 = 0.0;
  } else {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  return r;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  return nlohmann::json{
      {"accuracy", r.accuracy},
      {"f1", r.f1},
      {"confusion",
       {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}}},
      {"n", r.n}};
}

}  // namespace sten
