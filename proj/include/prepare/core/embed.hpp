#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/run.hpp"

namespace prepare {

/// Position of one flat feature inside an embedded window. Layout is
/// lag-major: index = lag * kFrameDim + joint * 3 + channel, lag 0 being the
/// most recent frame.
struct FeatureIndex {
  std::size_t joint = 0;
  Channel channel = Channel::position;
  std::size_t lag = 0;

  friend bool operator==(const FeatureIndex&, const FeatureIndex&) = default;
};

inline FeatureIndex feature_name(std::size_t index, std::size_t k_samples) {
  if (k_samples == 0 || index >= k_samples * kFrameDim)
    throw IndexError("feature index " + std::to_string(index) + " outside window of " +
                     std::to_string(k_samples) + " samples");
  const std::size_t slot = index % kFrameDim;
  return {slot / kChannelsPerJoint, static_cast<Channel>(slot % kChannelsPerJoint), index / kFrameDim};
}

inline std::size_t flat_index(const FeatureIndex& f, std::size_t k_samples) {
  if (f.joint >= kJoints || f.lag >= k_samples || static_cast<std::size_t>(f.channel) >= kChannelsPerJoint)
    throw IndexError("feature coordinates out of range");
  return f.lag * kFrameDim + f.joint * kChannelsPerJoint + static_cast<std::size_t>(f.channel);
}

/// Human-readable feature label, e.g. "j03_vel@t-5".
inline std::string feature_label(std::size_t index, std::size_t k_samples) {
  const auto f = feature_name(index, k_samples);
  return channel_column(f.joint * kChannelsPerJoint + static_cast<std::size_t>(f.channel)) + "@t-" +
         std::to_string(f.lag);
}

struct SampleOrigin {
  std::size_t run = 0;
  std::size_t frame = 0;

  friend bool operator==(const SampleOrigin&, const SampleOrigin&) = default;
};

struct EmbeddedSample {
  std::vector<double> features;
  Label target = Label::no_slip;
  SampleOrigin origin;
  std::size_t lookahead_n = 0;
};

namespace detail {
inline void check_embed_args(std::size_t run_len, std::size_t k, std::size_t n) {
  if (k == 0) throw InvalidConfig("k_samples must be >= 1");
  if (run_len < k + n)
    throw InsufficientHistory("run of " + std::to_string(run_len) + " frames is shorter than k + n = " +
                              std::to_string(k + n));
}
}  // namespace detail

/// Time-delay embedding of one run: one sample per anchor t in
/// [k-1, len-1-n], target = label of frame t+n.
inline std::vector<EmbeddedSample> embed(const Run& run, std::span<const LabelRecord> labels,
                                         std::size_t k_samples, std::size_t lookahead_n,
                                         std::size_t run_index = 0) {
  detail::check_embed_args(run.size(), k_samples, lookahead_n);
  const auto dense = dense_labels(labels, run.size());
  std::vector<EmbeddedSample> out;
  out.reserve(run.size() - k_samples + 1 - lookahead_n);
  for (std::size_t t = k_samples - 1; t + lookahead_n < run.size(); ++t) {
    EmbeddedSample s;
    s.features.resize(k_samples * kFrameDim);
    for (std::size_t lag = 0; lag < k_samples; ++lag) {
      const auto v = run.values(t - lag);
      std::copy(v.begin(), v.end(), s.features.begin() + static_cast<std::ptrdiff_t>(lag * kFrameDim));
    }
    s.target = dense[t + lookahead_n] ? Label::slip : Label::no_slip;
    s.origin = {run_index, t};
    s.lookahead_n = lookahead_n;
    out.push_back(std::move(s));
  }
  return out;
}

/// Lazily addressed embedding over several runs: element (i, j) is read
/// straight from the run's value table, so a 2160-wide design matrix costs
/// one pointer per row. The runs must outlive the matrix.
class EmbeddedMatrix {
 public:
  EmbeddedMatrix() = default;
  explicit EmbeddedMatrix(std::size_t k_samples) : k_(k_samples), offsets_(k_samples * kFrameDim) {
    for (std::size_t j = 0; j < offsets_.size(); ++j) {
      const auto lag = static_cast<std::ptrdiff_t>(j / kFrameDim);
      const auto slot = static_cast<std::ptrdiff_t>(j % kFrameDim);
      offsets_[j] = slot - lag * static_cast<std::ptrdiff_t>(kFrameDim);
    }
  }

  void add_anchor(const double* anchor_values) { anchors_.push_back(anchor_values); }

  std::size_t rows() const noexcept { return anchors_.size(); }
  std::size_t cols() const noexcept { return offsets_.size(); }
  std::size_t k_samples() const noexcept { return k_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return anchors_[i][offsets_[j]]; }

 private:
  std::size_t k_ = 0;
  std::vector<std::ptrdiff_t> offsets_;
  std::vector<const double*> anchors_;
};

struct EmbeddedDataset {
  EmbeddedMatrix X;
  std::vector<std::uint8_t> y;
  std::vector<SampleOrigin> origin;
  std::size_t k_samples = 0;
  std::size_t lookahead_n = 0;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t positives() const noexcept {
    std::size_t n = 0;
    for (auto v : y) n += v;
    return n;
  }
};

/// Embeds every run (labels looked up by run id) into one lazily addressed
/// dataset. Runs shorter than k + n contribute no samples; if no run is long
/// enough InsufficientHistory is raised.
inline EmbeddedDataset embed_runs(std::span<const Run> runs, const LabelSet& labels, std::size_t k_samples,
                                  std::size_t lookahead_n) {
  if (k_samples == 0) throw InvalidConfig("k_samples must be >= 1");
  EmbeddedDataset ds{EmbeddedMatrix(k_samples), {}, {}, k_samples, lookahead_n};
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Run& run = runs[r];
    if (run.size() < k_samples + lookahead_n) continue;
    const auto dense = dense_labels(labels.for_run(run.id()), run.size());
    const double* base = run.data().data();
    for (std::size_t t = k_samples - 1; t + lookahead_n < run.size(); ++t) {
      ds.X.add_anchor(base + t * kFrameDim);
      ds.y.push_back(dense[t + lookahead_n]);
      ds.origin.push_back({r, t});
    }
  }
  if (ds.y.empty())
    throw InsufficientHistory("no run has at least k + n = " + std::to_string(k_samples + lookahead_n) + " frames");
  return ds;
}

/// Builds the window ending at `anchor` directly from a run.
inline std::vector<double> window_at(const Run& run, std::size_t anchor, std::size_t k_samples) {
  if (anchor + 1 < k_samples || anchor >= run.size()) throw IndexError("anchor outside run");
  std::vector<double> out(k_samples * kFrameDim);
  for (std::size_t lag = 0; lag < k_samples; ++lag) {
    const auto v = run.values(anchor - lag);
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(lag * kFrameDim));
  }
  return out;
}

}  // namespace prepare
