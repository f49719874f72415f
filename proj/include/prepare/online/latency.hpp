#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/forest/slip_forest.hpp"

namespace prepare::online {

struct LatencyStats {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;
};

/// Nearest-rank percentile of an ascending sample.
inline double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

/// Wall-clock distribution of single-window inference, cycling through
/// `windows` for `repetitions` timed calls.
inline LatencyStats measure_latency(const forest::SlipForest& forest, std::span<const std::vector<double>> windows,
                                    std::size_t repetitions) {
  if (repetitions < 100) throw InvalidConfig("latency measurement needs at least 100 repetitions");
  if (windows.empty()) throw NoInput("no windows to time");
  std::vector<double> ms(repetitions);
  volatile double sink = 0.0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto& w = windows[r % windows.size()];
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + forest.predict_proba(w);
    const auto t1 = std::chrono::steady_clock::now();
    ms[r] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  return {percentile(ms, 0.50), percentile(ms, 0.95), ms.back(), repetitions};
}

}  // namespace prepare::online
