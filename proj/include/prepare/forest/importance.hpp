#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/forest/slip_forest.hpp"

namespace prepare::forest {

/// Non-negative per-feature scores summing to one.
struct ImportanceVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values.at(i); }

  /// Feature indices ordered by descending importance (ties by index).
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return order;
  }
};

/// Mean decrease in impurity: for every split node, the sample-weighted drop
/// from the node's Gini to its children's, attributed to the split feature,
/// averaged over trees and normalised.
inline ImportanceVector mdi_importance(const SlipForest& forest) {
  std::vector<double> acc(forest.input_dim(), 0.0);
  bool any_split = false;
  for (const auto& tree : forest.trees()) {
    const auto& nodes = tree.nodes();
    const double root = nodes.front().total();
    for (const auto& n : nodes) {
      if (n.is_leaf()) continue;
      any_split = true;
      const auto& l = nodes[static_cast<std::size_t>(n.left)];
      const auto& r = nodes[static_cast<std::size_t>(n.right)];
      const double decrease = (n.total() / root) * n.impurity() - (l.total() / root) * l.impurity() -
                              (r.total() / root) * r.impurity();
      acc[static_cast<std::size_t>(n.feature)] += std::max(0.0, decrease);
    }
  }
  if (!any_split) throw NoSplits("forest contains no split nodes");
  for (auto& v : acc) v /= static_cast<double>(forest.num_trees());
  const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
  if (!(total > 0.0)) throw NoSplits("forest splits carry no impurity decrease");
  for (auto& v : acc) v /= total;
  return {std::move(acc)};
}

/// Smallest set of features, taken in descending importance, whose
/// cumulative importance reaches `mass`. Returned sorted by feature index.
inline std::vector<std::size_t> ablate_features(const ImportanceVector& importance, double mass = 0.95) {
  if (!(mass > 0.0 && mass <= 1.0)) throw InvalidConfig("ablation mass must lie in (0, 1]");
  const double total = std::accumulate(importance.values.begin(), importance.values.end(), 0.0);
  std::vector<std::size_t> keep;
  double cumulative = 0.0;
  for (const auto f : importance.ranking()) {
    if (cumulative >= mass * total - 1e-12) break;
    keep.push_back(f);
    cumulative += importance.values[f];
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace prepare::forest
