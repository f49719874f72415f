#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prepare/core/error.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"

namespace prepare::anomaly {

inline constexpr double kEulerGamma = 0.5772156649;

/// Average path length of an unsuccessful search in a binary search tree of
/// m points; the normaliser of isolation depths. c(2) = 1 and c(m <= 1) = 0.
inline double average_path_length(std::size_t m) {
  if (m <= 1) return 0.0;
  if (m == 2) return 1.0;
  const double mm = static_cast<double>(m);
  return 2.0 * (std::log(mm - 1.0) + kEulerGamma) - 2.0 * (mm - 1.0) / mm;
}

inline std::size_t max_isolation_depth(std::size_t subsample_size) {
  std::size_t depth = 0;
  while ((std::size_t{1} << depth) < subsample_size) ++depth;
  return depth;
}

struct IsolationNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double split = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t size = 0;   // leaf: training points that reached it
  std::uint32_t depth = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const IsolationNode&, const IsolationNode&) = default;
};

class IsolationTree {
 public:
  IsolationTree() = default;
  /// Node 0 is the root; children must come after their parent.
  explicit IsolationTree(std::vector<IsolationNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw InvalidConfig("isolation tree needs at least one node");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.is_leaf()) continue;
      if (n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
          n.left >= static_cast<std::int32_t>(nodes_.size()) || n.right >= static_cast<std::int32_t>(nodes_.size()))
        throw InvalidConfig("isolation tree child index out of order");
    }
  }

  const std::vector<IsolationNode>& nodes() const noexcept { return nodes_; }

  const IsolationNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right);
    }
    return nodes_[i];
  }

  /// Depth at which x is isolated plus the c(size) correction for the
  /// unresolved points sharing its leaf.
  double path_length(std::span<const double> x) const {
    const auto& leaf = leaf_for(x);
    return static_cast<double>(leaf.depth) + average_path_length(leaf.size);
  }

  std::size_t depth() const {
    std::uint32_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  friend bool operator==(const IsolationTree&, const IsolationTree&) = default;

 private:
  std::vector<IsolationNode> nodes_;
};

struct IsolationForestOptions {
  std::size_t num_trees = 100;
  std::size_t subsample_size = 256;
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  IsolationForest() = default;
  IsolationForest(std::vector<IsolationTree> trees, std::size_t subsample_size, std::size_t dim, std::uint64_t seed)
      : trees_(std::move(trees)), subsample_size_(subsample_size), dim_(dim), seed_(seed) {
    if (subsample_size_ < 2) throw InvalidConfig("subsample size must be >= 2");
  }

  const std::vector<IsolationTree>& trees() const noexcept { return trees_; }
  std::size_t num_trees() const noexcept { return trees_.size(); }
  std::size_t subsample_size() const noexcept { return subsample_size_; }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  double mean_path_length(std::span<const double> x) const {
    check_dim(x.size());
    double total = 0.0;
    for (const auto& t : trees_) total += t.path_length(x);
    return total / static_cast<double>(trees_.size());
  }

  /// s(x) = 2^(-E[h(x)] / c(psi)); 1 means isolated immediately, 0.5 is the
  /// typical point, lower is denser than typical.
  double score(std::span<const double> x) const {
    return std::exp2(-mean_path_length(x) / average_path_length(subsample_size_));
  }

  template <FeatureMatrix M>
  std::vector<double> score_all(const M& X) const {
    check_dim(X.cols());
    std::vector<double> row(X.cols());
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
      copy_row(X, i, row);
      out[i] = score(row);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : t.nodes()) {
        if (n.is_leaf()) nodes.push_back({n.size, n.depth});
        else nodes.push_back({n.feature, n.split, n.left, n.right});
      }
      trees.push_back(std::move(nodes));
    }
    return {{"format", "prepare.isolation_forest"}, {"version", 1},          {"num_trees", trees_.size()},
            {"subsample_size", subsample_size_},    {"dim", dim_},           {"seed", seed_},
            {"trees", std::move(trees)}};
  }

  static IsolationForest from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "prepare.isolation_forest") throw SchemaMismatch("not an isolation forest document");
    std::vector<IsolationTree> trees;
    for (const auto& jt : j.at("trees")) {
      std::vector<IsolationNode> nodes;
      // Depth of internal nodes is implied by position; recompute from parents.
      std::vector<std::uint32_t> depth(jt.size(), 0);
      for (std::size_t i = 0; i < jt.size(); ++i) {
        const auto& a = jt[i];
        IsolationNode n;
        if (a.size() == 2) {
          n.size = a[0].get<std::uint32_t>();
          n.depth = a[1].get<std::uint32_t>();
        } else if (a.size() == 4) {
          n.feature = a[0].get<std::int32_t>();
          n.split = a[1].get<double>();
          n.left = a[2].get<std::int32_t>();
          n.right = a[3].get<std::int32_t>();
          n.depth = depth[i];
          if (n.left < 0 || n.right < 0 || static_cast<std::size_t>(n.left) >= jt.size() ||
              static_cast<std::size_t>(n.right) >= jt.size())
            throw SchemaMismatch("isolation node child out of range");
          depth[static_cast<std::size_t>(n.left)] = depth[static_cast<std::size_t>(n.right)] = n.depth + 1;
        } else {
          throw SchemaMismatch("isolation node must have 2 or 4 entries");
        }
        nodes.push_back(n);
      }
      trees.emplace_back(std::move(nodes));
    }
    return IsolationForest(std::move(trees), j.at("subsample_size").get<std::size_t>(), j.at("dim").get<std::size_t>(),
                           j.at("seed").get<std::uint64_t>());
  }

 private:
  void check_dim(std::size_t n) const {
    if (n != dim_)
      throw ShapeError("feature vector has " + std::to_string(n) + " entries, forest expects " + std::to_string(dim_));
  }

  std::vector<IsolationTree> trees_;
  std::size_t subsample_size_ = 2;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
};

namespace detail {

template <FeatureMatrix M>
class IsolationTreeBuilder {
 public:
  IsolationTreeBuilder(const M& X, std::size_t max_depth, Rng& rng) : X_(X), max_depth_(max_depth), rng_(rng) {}

  IsolationTree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    grow(0, rows_.size(), 0);
    return IsolationTree(std::move(nodes_));
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::uint32_t depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = end - begin;
    auto make_leaf = [&] {
      nodes_[static_cast<std::size_t>(id)].size = static_cast<std::uint32_t>(n);
      nodes_[static_cast<std::size_t>(id)].depth = depth;
      return id;
    };
    if (n <= 1 || depth >= max_depth_) return make_leaf();

    // Try features in random order until one is not constant on this node.
    std::vector<std::size_t> order(X_.cols());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t feature = 0;
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (std::size_t remaining = order.size(); remaining > 0 && !found; --remaining) {
      const std::size_t pick = uniform_index(rng_, remaining);
      feature = order[pick];
      std::swap(order[pick], order[remaining - 1]);
      lo = hi = X_(rows_[begin], feature);
      for (std::size_t r = begin + 1; r < end; ++r) {
        const double v = X_(rows_[r], feature);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      found = lo < hi;
    }
    if (!found) return make_leaf();

    double split;
    do {
      split = lo + uniform01(rng_) * (hi - lo);
    } while (!(split > lo && split < hi));

    auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows_.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::size_t r) { return X_(r, feature) < split; });
    const auto cut = static_cast<std::size_t>(mid - rows_.begin());
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(feature);
    node.split = split;
    node.depth = depth;
    node.size = static_cast<std::uint32_t>(n);
    const auto left = grow(begin, cut, depth + 1);
    const auto right = grow(cut, end, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  const M& X_;
  std::size_t max_depth_;
  Rng& rng_;
  std::vector<std::size_t> rows_;
  std::vector<IsolationNode> nodes_;
};

}  // namespace detail

/// Grows `num_trees` isolation trees, each on its own subsample drawn without
/// replacement with a seed derived from (seed, tree index).
template <FeatureMatrix M>
IsolationForest fit_iforest(const M& X, const IsolationForestOptions& opts) {
  if (opts.subsample_size < 2) throw InvalidConfig("subsample size must be >= 2");
  if (opts.num_trees == 0) throw InvalidConfig("num_trees must be >= 1");
  if (X.rows() == 0) throw InvalidConfig("cannot fit an isolation forest on zero samples");
  if (opts.subsample_size > X.rows())
    throw InvalidConfig("subsample size " + std::to_string(opts.subsample_size) + " exceeds sample count " +
                        std::to_string(X.rows()));
  const std::size_t max_depth = max_isolation_depth(opts.subsample_size);
  std::vector<IsolationTree> trees;
  trees.reserve(opts.num_trees);
  for (std::size_t t = 0; t < opts.num_trees; ++t) {
    Rng rng(derive_seed(opts.seed, t));
    auto rows = sample_without_replacement(rng, X.rows(), opts.subsample_size);
    trees.push_back(detail::IsolationTreeBuilder<M>(X, max_depth, rng).build(std::move(rows)));
  }
  return IsolationForest(std::move(trees), opts.subsample_size, X.cols(), opts.seed);
}

inline double anomaly_score(const IsolationForest& forest, std::span<const double> x) { return forest.score(x); }

}  // namespace prepare::anomaly
