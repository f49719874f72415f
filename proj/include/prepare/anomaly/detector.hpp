#pragma once

#include <span>
#include <string>
#include <vector>

#include "prepare/anomaly/isolation_forest.hpp"
#include "prepare/anomaly/windows.hpp"
#include "prepare/core/embed.hpp"
#include "prepare/core/run.hpp"

namespace prepare::anomaly {

struct DetectorOptions {
  /// Frames per detector input window; 1 scores raw frames, 17 is ~1 s at 16.67 Hz.
  std::size_t window_samples = 17;
  IsolationForestOptions forest{};
  double contamination = 0.05;
  double window_seconds = 1.0;
};

struct RunDetection {
  std::string run_id;
  AnomalyResult result;
  double effort_reduction = 1.0;
};

struct DetectionReport {
  IsolationForest forest;
  std::vector<RunDetection> runs;

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.result.scores.size();
    return n;
  }
  /// Frame-weighted effort reduction over all runs.
  double overall_effort_reduction() const {
    std::size_t covered = 0;
    for (const auto& r : runs) covered += r.result.frames_in_windows();
    const auto total = total_frames();
    return total == 0 ? 1.0 : static_cast<double>(total - covered) / static_cast<double>(total);
  }
  std::vector<CandidateWindow> candidates() const {
    std::vector<CandidateWindow> out;
    for (const auto& r : runs)
      for (const auto& w : r.result.windows) out.push_back({r.run_id, w.start, w.end, w.peak_score});
    return out;
  }
};

/// Per-frame scores for one run: each embedded window's score is attributed
/// to its newest frame; the first window_samples-1 frames (which have no
/// complete window) take the score of the first full window.
inline std::vector<double> frame_scores(const IsolationForest& forest, const Run& run, std::size_t window_samples) {
  if (run.size() < window_samples)
    throw InsufficientHistory("run '" + run.id() + "' is shorter than the detector window");
  std::vector<double> out(run.size());
  for (std::size_t t = window_samples - 1; t < run.size(); ++t)
    out[t] = forest.score(window_at(run, t, window_samples));
  for (std::size_t t = 0; t + 1 < window_samples; ++t) out[t] = out[window_samples - 1];
  return out;
}

/// Fits one isolation forest across all runs' windows, then scores and
/// windows each run separately.
inline DetectionReport detect_anomalies(std::span<const Run> runs, const DetectorOptions& opts) {
  if (runs.empty()) throw NoInput("no runs given to the anomaly detector");
  LabelSet none;
  const auto ds = embed_runs(runs, none, opts.window_samples, 0);
  auto forest_opts = opts.forest;
  if (forest_opts.subsample_size > ds.size()) forest_opts.subsample_size = ds.size();
  DetectionReport report{fit_iforest(ds.X, forest_opts), {}};
  for (const auto& run : runs) {
    if (run.size() < opts.window_samples) continue;
    RunDetection rd;
    rd.run_id = run.id();
    const auto scores = frame_scores(report.forest, run, opts.window_samples);
    rd.result = mark_windows(scores, opts.contamination, run.sample_period(), opts.window_seconds);
    rd.effort_reduction = effort_reduction(rd.result, run.size());
    report.runs.push_back(std::move(rd));
  }
  return report;
}

}  // namespace prepare::anomaly
