#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"
#include "prepare/forest/gini.hpp"

namespace prepare::forest {

struct SplitCandidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  double weighted_impurity = 0.0;  // G of the split
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] < threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  ClassCounts counts{};       // bootstrap-weighted class counts of the node's samples
  std::uint16_t depth = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  std::uint32_t total() const noexcept { return counts[0] + counts[1]; }
  double slip_fraction() const noexcept { return static_cast<double>(counts[1]) / static_cast<double>(total()); }
  double impurity() const { return gini(counts); }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary decision tree stored in depth-first pre-order (node 0 is the root).
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InvalidConfig("decision tree needs at least one node");
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  /// Index of the node where x stops, optionally treating nodes at
  /// `depth_limit` as leaves.
  std::size_t route(std::span<const double> x, std::size_t depth_limit = SIZE_MAX) const noexcept {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf() && nodes_[i].depth < depth_limit) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return i;
  }

  double predict(std::span<const double> x, std::size_t depth_limit = SIZE_MAX) const noexcept {
    return nodes_[route(x, depth_limit)].slip_fraction();
  }

  /// Leaf fractions of x under each depth limit in `limits` (ascending),
  /// from a single root-to-leaf walk.
  void predict_at_depths(std::span<const double> x, std::span<const std::size_t> limits,
                         std::span<double> out) const noexcept {
    std::size_t i = 0, b = 0;
    while (b < limits.size()) {
      const auto& n = nodes_[i];
      while (b < limits.size() && (n.is_leaf() || n.depth >= limits[b])) out[b++] = n.slip_fraction();
      if (b == limits.size()) break;
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
  }

  std::size_t depth() const noexcept {
    std::uint16_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  /// Copy with every node at `max_depth` turned into a leaf and deeper nodes
  /// dropped; pre-order is preserved.
  DecisionTree truncated(std::size_t max_depth) const {
    std::vector<TreeNode> out;
    std::vector<std::int32_t> remap(nodes_.size(), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].depth > max_depth) continue;
      remap[i] = static_cast<std::int32_t>(out.size());
      out.push_back(nodes_[i]);
      if (nodes_[i].depth == max_depth) {
        out.back().feature = -1;
        out.back().threshold = 0.0;
        out.back().left = out.back().right = -1;
      }
    }
    for (auto& n : out) {
      if (n.is_leaf()) continue;
      n.left = remap[static_cast<std::size_t>(n.left)];
      n.right = remap[static_cast<std::size_t>(n.right)];
    }
    return DecisionTree(std::move(out));
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

struct ValueLabel {
  double value;
  std::uint32_t label;
};

/// Order-preserving map of a double onto an unsigned key.
inline std::uint64_t sort_key(double v) noexcept {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

/// Sorts by value: LSD radix over the key bytes for large inputs (bytes that
/// are equal across all entries are skipped), std::sort for small ones.
inline void sort_by_value(std::vector<ValueLabel>& buf, std::vector<ValueLabel>& tmp) {
  const std::size_t n = buf.size();
  if (n < 256) {
    std::sort(buf.begin(), buf.end(), [](const ValueLabel& a, const ValueLabel& b) { return a.value < b.value; });
    return;
  }
  tmp.resize(n);
  std::array<std::array<std::uint32_t, 256>, 8> hist{};
  for (const auto& e : buf) {
    const auto k = sort_key(e.value);
    for (std::size_t b = 0; b < 8; ++b) ++hist[b][(k >> (8 * b)) & 0xFF];
  }
  for (std::size_t b = 0; b < 8; ++b) {
    auto& h = hist[b];
    if (std::find(h.begin(), h.end(), n) != h.end()) continue;
    std::uint32_t sum = 0;
    for (auto& c : h) {
      const auto t = c;
      c = sum;
      sum += t;
    }
    for (const auto& e : buf) tmp[h[(sort_key(e.value) >> (8 * b)) & 0xFF]++] = e;
    buf.swap(tmp);
  }
}

/// Split threshold strictly between two consecutive distinct values a < b.
inline double midpoint_threshold(double a, double b) noexcept {
  const double m = std::midpoint(a, b);
  return m > a ? m : b;
}

/// Scans one feature's sorted (value, label) pairs; updates `best` when a
/// strictly lower G is found. Thresholds are visited in ascending order.
inline void scan_sorted(std::span<const ValueLabel> sorted, double total_no, double total_yes, std::size_t feature,
                        std::optional<SplitCandidate>& best) {
  double left_no = 0.0, left_yes = 0.0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i].label) left_yes += 1.0;
    else left_no += 1.0;
    if (!(sorted[i].value < sorted[i + 1].value)) continue;
    const double g = split_impurity(left_no, left_yes, total_no - left_no, total_yes - left_yes);
    if (!best || g < best->weighted_impurity)
      best = SplitCandidate{feature, midpoint_threshold(sorted[i].value, sorted[i + 1].value), g};
  }
}

/// Reusable buffers for split search.
class SplitSearch {
 public:
  template <FeatureMatrix M, class RowIndex>
  std::optional<SplitCandidate> run(const M& X, std::span<const std::uint8_t> y, std::span<const RowIndex> rows,
                                    std::span<const std::size_t> features) {
    if (rows.size() < 2) return std::nullopt;
    double no = 0.0, yes = 0.0;
    for (auto r : rows) {
      if (y[static_cast<std::size_t>(r)]) yes += 1.0;
      else no += 1.0;
    }
    if (no == 0.0 || yes == 0.0) return std::nullopt;
    buf_.resize(rows.size());
    std::optional<SplitCandidate> best;
    for (const std::size_t f : features) {
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<std::size_t>(rows[k]);
        buf_[k] = {X(r, f), y[r]};
      }
      sort_by_value(buf_, tmp_);
      if (!(buf_.front().value < buf_.back().value)) continue;
      scan_sorted(buf_, no, yes, f, best);
    }
    return best;
  }

 private:
  std::vector<ValueLabel> buf_, tmp_;
};

}  // namespace detail

/// Best (feature, threshold) over `candidate_features` by weighted Gini,
/// scanning midpoints between consecutive distinct values. Ties keep the
/// first candidate in (feature ascending, threshold ascending) order. Returns
/// nullopt for pure nodes, nodes with fewer than two rows, or when every
/// candidate feature is constant.
template <FeatureMatrix M>
std::optional<SplitCandidate> best_split(const M& X, std::span<const std::uint8_t> y,
                                         std::span<const std::size_t> rows,
                                         std::span<const std::size_t> candidate_features) {
  std::vector<std::size_t> feats(candidate_features.begin(), candidate_features.end());
  std::sort(feats.begin(), feats.end());
  for (auto f : feats)
    if (f >= X.cols()) throw IndexError("candidate feature out of range");
  detail::SplitSearch search;
  return search.run(X, y, rows, std::span<const std::size_t>(feats));
}

struct TreeGrowthOptions {
  std::size_t max_depth = 10;
  std::size_t features_per_split = 0;  // resolved count, >= 1
  std::size_t min_samples_split = 2;
};

namespace detail {

/// Grows one tree depth-first. Each node draws its feature subset from an RNG
/// seeded by (tree seed, heap position of the node), so the tree grown with a
/// smaller depth limit is exactly the truncation of a deeper one.
template <FeatureMatrix M>
class TreeBuilder {
 public:
  TreeBuilder(const M& X, std::span<const std::uint8_t> y, std::span<const std::size_t> feature_pool,
              const TreeGrowthOptions& opts, std::uint64_t tree_seed)
      : X_(X), y_(y), pool_(feature_pool), opts_(opts), seed_(tree_seed) {}

  DecisionTree build(std::vector<std::uint32_t> rows) {
    rows_ = std::move(rows);
    nodes_.clear();
    grow(0, rows_.size(), 0, 1);
    return DecisionTree(std::move(nodes_));
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::uint16_t depth, std::uint64_t heap_pos) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    TreeNode node;
    node.depth = depth;
    for (std::size_t k = begin; k < end; ++k) ++node.counts[y_[rows_[k]]];
    nodes_.push_back(node);

    const std::size_t n = end - begin;
    if (depth >= opts_.max_depth || n < opts_.min_samples_split || node.counts[0] == 0 || node.counts[1] == 0)
      return id;

    Rng rng(derive_seed(seed_, heap_pos));
    auto picks = sample_without_replacement(rng, pool_.size(), opts_.features_per_split);
    for (auto& p : picks) p = pool_[p];
    std::sort(picks.begin(), picks.end());

    const auto rows = std::span<const std::uint32_t>(rows_.data() + begin, n);
    const auto split = search_.run(X_, y_, rows, std::span<const std::size_t>(picks));
    if (!split) return id;

    const auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::uint32_t r) { return X_(r, split->feature) < split->threshold; });
    const auto cut = static_cast<std::size_t>(mid - rows_.begin());
    nodes_[static_cast<std::size_t>(id)].feature = static_cast<std::int32_t>(split->feature);
    nodes_[static_cast<std::size_t>(id)].threshold = split->threshold;
    const auto left = grow(begin, cut, static_cast<std::uint16_t>(depth + 1), heap_pos * 2);
    const auto right = grow(cut, end, static_cast<std::uint16_t>(depth + 1), heap_pos * 2 + 1);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  const M& X_;
  std::span<const std::uint8_t> y_;
  std::span<const std::size_t> pool_;
  TreeGrowthOptions opts_;
  std::uint64_t seed_;
  std::vector<std::uint32_t> rows_;
  std::vector<TreeNode> nodes_;
  SplitSearch search_;
};

}  // namespace detail

}  // namespace prepare::forest
