#pragma once

#include <array>
#include <cstdint>

#include "prepare/core/error.hpp"

namespace prepare::forest {

/// Class counts at a node, indexed by label (0 = no_slip, 1 = slip).
using ClassCounts = std::array<std::uint32_t, 2>;

/// Gini impurity 1 - sum_c (n_c/n)^2 from raw counts; callers guarantee n > 0.
inline double gini_unchecked(double no_slip, double slip) noexcept {
  const double n = no_slip + slip;
  const double p0 = no_slip / n;
  const double p1 = slip / n;
  return 1.0 - (p0 * p0 + p1 * p1);
}

inline double gini(ClassCounts counts) {
  if (counts[0] + counts[1] == 0) throw EmptyNode("gini impurity of an empty node");
  return gini_unchecked(counts[0], counts[1]);
}

/// Weighted child impurity G = |L|/|V| Q(L) + |R|/|V| Q(R).
inline double split_impurity(double left_no, double left_yes, double right_no, double right_yes) noexcept {
  const double nl = left_no + left_yes;
  const double nr = right_no + right_yes;
  const double n = nl + nr;
  return (nl / n) * gini_unchecked(left_no, left_yes) + (nr / n) * gini_unchecked(right_no, right_yes);
}

}  // namespace prepare::forest
