#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/text.hpp"

namespace prepare::anomaly {

/// Inclusive frame interval [start, end].
struct FrameWindow {
  std::size_t start = 0;
  std::size_t end = 0;
  double peak_score = 0.0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool contains(std::size_t f) const noexcept { return f >= start && f <= end; }
  friend bool operator==(const FrameWindow&, const FrameWindow&) = default;
};

struct AnomalyResult {
  std::vector<double> scores;
  std::vector<bool> outlier_flags;
  std::vector<FrameWindow> windows;  // disjoint, sorted

  std::size_t flagged_count() const {
    return static_cast<std::size_t>(std::count(outlier_flags.begin(), outlier_flags.end(), true));
  }
  std::size_t frames_in_windows() const {
    std::size_t n = 0;
    for (const auto& w : windows) n += w.length();
    return n;
  }
  bool in_window(std::size_t frame) const {
    const auto it = std::upper_bound(windows.begin(), windows.end(), frame,
                                     [](std::size_t f, const FrameWindow& w) { return f < w.start; });
    return it != windows.begin() && std::prev(it)->contains(frame);
  }
};

/// Half-width, in frames, of a window of `window_seconds` centred on a frame.
inline std::size_t half_window_frames(double sample_period, double window_seconds) {
  if (!(sample_period > 0.0)) throw InvalidConfig("sample period must be positive");
  if (!(window_seconds >= 0.0)) throw InvalidConfig("window length must be non-negative");
  return static_cast<std::size_t>(std::floor(0.5 * window_seconds / sample_period + 1e-9));
}

/// Flags the top `contamination` fraction of frames by score and surrounds
/// each with a centred window, merging overlapping or touching windows.
/// Frames tied with the cut-off score are not flagged, so a constant score
/// sequence yields no windows.
inline AnomalyResult mark_windows(std::span<const double> scores, double contamination, double sample_period,
                                  double window_seconds = 1.0) {
  if (scores.empty()) throw InvalidConfig("no scores to window");
  if (!(contamination > 0.0 && contamination < 0.5))
    throw InvalidConfig("contamination must lie in (0, 0.5), got " + text::format_double(contamination));
  const std::size_t half = half_window_frames(sample_period, window_seconds);
  const std::size_t n = scores.size();

  AnomalyResult res;
  res.scores.assign(scores.begin(), scores.end());
  res.outlier_flags.assign(n, false);

  const auto budget = static_cast<std::size_t>(std::floor(contamination * static_cast<double>(n)));
  if (budget == 0) return res;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(budget), sorted.end(),
                   std::greater<>());
  const double cutoff = sorted[budget];  // (budget+1)-th largest

  for (std::size_t i = 0; i < n; ++i) {
    if (!(scores[i] > cutoff)) continue;
    res.outlier_flags[i] = true;
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    if (!res.windows.empty() && lo <= res.windows.back().end + 1) {
      res.windows.back().end = std::max(res.windows.back().end, hi);
    } else {
      res.windows.push_back({lo, hi, 0.0});
    }
  }
  for (auto& w : res.windows)
    w.peak_score = *std::max_element(scores.begin() + static_cast<std::ptrdiff_t>(w.start),
                                     scores.begin() + static_cast<std::ptrdiff_t>(w.end) + 1);
  return res;
}

/// Share of frames the annotator never needs to look at.
inline double effort_reduction(const AnomalyResult& result, std::size_t total_frames) {
  if (total_frames == 0) throw InvalidConfig("total_frames must be >= 1");
  const std::size_t covered = std::min(result.frames_in_windows(), total_frames);
  return static_cast<double>(total_frames - covered) / static_cast<double>(total_frames);
}

/// Candidate interval as exchanged with the annotation service.
struct CandidateWindow {
  std::string run_id;
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  double peak_score = 0.0;

  friend bool operator==(const CandidateWindow&, const CandidateWindow&) = default;
};

inline std::string candidates_to_csv(std::span<const CandidateWindow> cands) {
  std::string out = "run_id,start_index,end_index,peak_score\n";
  for (const auto& c : cands)
    out += c.run_id + ',' + std::to_string(c.start_index) + ',' + std::to_string(c.end_index) + ',' +
           text::format_double(c.peak_score) + '\n';
  return out;
}

inline std::vector<CandidateWindow> candidates_from_csv(const std::vector<std::string>& lines) {
  if (lines.empty() || text::trim(lines[0]) != "run_id,start_index,end_index,peak_score")
    throw SchemaMismatch("candidate file header must be run_id,start_index,end_index,peak_score");
  std::vector<CandidateWindow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    const auto f = text::split(lines[i]);
    CandidateWindow c;
    if (f.size() != 4 || !text::parse_int(f[1], c.start_index) || !text::parse_int(f[2], c.end_index) ||
        !text::parse_double(f[3], c.peak_score) || c.end_index < c.start_index)
      throw SchemaMismatch("bad candidate line " + std::to_string(i + 1));
    c.run_id = std::string(text::trim(f[0]));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace prepare::anomaly
