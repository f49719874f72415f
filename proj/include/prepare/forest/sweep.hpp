#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/embed.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/run.hpp"
#include "prepare/core/text.hpp"
#include "prepare/forest/train.hpp"

namespace prepare::forest {

/// Common sample period of a set of runs (they must agree within 1%).
inline double common_sample_period(std::span<const Run> runs) {
  if (runs.empty()) throw NoInput("no runs");
  double period = 0.0;
  for (const auto& r : runs) {
    if (r.size() < 2) continue;
    if (period == 0.0) period = r.sample_period();
    else if (std::abs(r.sample_period() - period) > 0.01 * period)
      throw InvalidConfig("runs have different sample periods (" + text::format_double(period) + " vs " +
                          text::format_double(r.sample_period()) + " s)");
  }
  if (period == 0.0) throw InvalidConfig("cannot infer a sample period from single-frame runs");
  return period;
}

/// Window length in samples for a history of `seconds`; zero history still
/// means the current frame (k = 1).
inline std::size_t history_samples(double seconds, double sample_period) {
  if (!(seconds >= 0.0)) throw InvalidConfig("history length must be non-negative");
  const auto k = static_cast<std::size_t>(std::llround(seconds / sample_period));
  return std::max<std::size_t>(1, k);
}

/// Look-ahead in samples; rejects look-aheads that are not a whole number of
/// samples and names the nearest one that is.
inline std::size_t lookahead_samples(double lookahead_ms, double sample_period) {
  if (!(lookahead_ms >= 0.0)) throw InvalidConfig("look-ahead must be non-negative");
  const double exact = lookahead_ms / 1000.0 / sample_period;
  const double n = std::round(exact);
  if (std::abs(exact - n) > 1e-6 * std::max(1.0, exact))
    throw InvalidConfig("look-ahead of " + text::format_double(lookahead_ms) +
                        " ms is not a whole number of samples; nearest valid look-ahead is " +
                        text::format_fixed(n * sample_period * 1000.0, 3) + " ms");
  return static_cast<std::size_t>(n);
}

struct SweepRow {
  double setting = 0.0;  // seconds of history or milliseconds of look-ahead
  std::size_t k_samples = 0;
  std::size_t lookahead_n = 0;
  std::optional<CvResult> full;
  std::optional<CvResult> ablated;
};

inline SweepRow evaluate_setting(std::span<const Run> runs, const LabelSet& labels, double setting, std::size_t k,
                                 std::size_t n, const TrainOptions& opts) {
  const auto ds = embed_runs(runs, labels, k, n);
  auto res = train_slip_model(ds.X, ds.y, opts, {}, false);
  return {setting, k, n, std::move(res.full_cv), std::move(res.ablated_cv)};
}

/// One cross-validated model per history length at a fixed look-ahead.
inline std::vector<SweepRow> sweep_history(std::span<const Run> runs, const LabelSet& labels,
                                           std::span<const double> history_seconds, std::size_t lookahead_n,
                                           const TrainOptions& opts) {
  const double period = common_sample_period(runs);
  std::vector<SweepRow> rows;
  for (double s : history_seconds)
    rows.push_back(evaluate_setting(runs, labels, s, history_samples(s, period), lookahead_n, opts));
  return rows;
}

/// One cross-validated model per look-ahead with the history window fixed.
inline std::vector<SweepRow> sweep_lookahead(std::span<const Run> runs, const LabelSet& labels,
                                             double history_seconds, std::span<const double> lookaheads_ms,
                                             const TrainOptions& opts) {
  const double period = common_sample_period(runs);
  const std::size_t k = history_samples(history_seconds, period);
  std::vector<std::size_t> ns;
  for (double ms : lookaheads_ms) ns.push_back(lookahead_samples(ms, period));
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < ns.size(); ++i)
    rows.push_back(evaluate_setting(runs, labels, lookaheads_ms[i], k, ns[i], opts));
  return rows;
}

/// `length_or_lookahead,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std`
/// for either the full-feature or the ablated models.
inline std::string sweep_to_csv(std::span<const SweepRow> rows, bool ablated) {
  std::string out = "length_or_lookahead,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std\n";
  for (const auto& r : rows) {
    const auto& cv = ablated ? r.ablated : r.full;
    if (!cv) continue;
    const auto& m = cv->best;
    out += text::format_double(r.setting);
    for (double v : {m.precision_mean, m.precision_std, m.recall_mean, m.recall_std, m.f_mean, m.f_std})
      out += ',' + text::format_fixed(v, 6);
    out += '\n';
  }
  return out;
}

}  // namespace prepare::forest
