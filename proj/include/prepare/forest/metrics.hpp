#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "prepare/core/error.hpp"

namespace prepare::forest {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct FoldMetrics {
  double precision = 0.0, recall = 0.0, f_score = 0.0;
  Confusion confusion;
};

/// Count-based precision / recall / F-score. The headline values come from
/// the pooled confusion counts, so f_score is always the harmonic mean of
/// precision and recall; cross-validated reports additionally carry the
/// per-fold values with their mean and standard deviation.
struct MetricsReport {
  double precision = 0.0, recall = 0.0, f_score = 0.0;
  Confusion confusion;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive labels

  std::vector<FoldMetrics> per_fold;
  double precision_mean = 0.0, precision_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  double f_mean = 0.0, f_std = 0.0;
};

inline double harmonic_f(double precision, double recall) noexcept {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline MetricsReport report_from_confusion(const Confusion& c) {
  MetricsReport r;
  r.confusion = c;
  r.precision_undefined = c.tp + c.fp == 0;
  r.recall_undefined = c.tp + c.fn == 0;
  r.precision = r.precision_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = r.recall_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f_score = harmonic_f(r.precision, r.recall);
  r.precision_mean = r.precision;
  r.recall_mean = r.recall;
  r.f_mean = r.f_score;
  return r;
}

inline Confusion confusion_of(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truth) {
  if (predictions.size() != truth.size()) throw ShapeError("predictions and truth differ in length");
  if (predictions.empty()) throw ShapeError("no predictions to score");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predictions[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline MetricsReport metrics(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truth) {
  return report_from_confusion(confusion_of(predictions, truth));
}

/// Pools fold confusions for the headline values and adds fold mean/std
/// (population standard deviation).
inline MetricsReport aggregate_folds(const std::vector<Confusion>& folds) {
  Confusion pooled;
  std::vector<FoldMetrics> per;
  for (const auto& c : folds) {
    pooled += c;
    const auto r = report_from_confusion(c);
    per.push_back({r.precision, r.recall, r.f_score, c});
  }
  auto rep = report_from_confusion(pooled);
  rep.per_fold = per;
  auto mean_std = [&](auto field, double& mean, double& sd) {
    mean = 0.0;
    for (const auto& f : per) mean += f.*field;
    mean /= static_cast<double>(per.size());
    double ss = 0.0;
    for (const auto& f : per) ss += (f.*field - mean) * (f.*field - mean);
    sd = std::sqrt(ss / static_cast<double>(per.size()));
  };
  if (!per.empty()) {
    mean_std(&FoldMetrics::precision, rep.precision_mean, rep.precision_std);
    mean_std(&FoldMetrics::recall, rep.recall_mean, rep.recall_std);
    mean_std(&FoldMetrics::f_score, rep.f_mean, rep.f_std);
  }
  return rep;
}

}  // namespace prepare::forest
