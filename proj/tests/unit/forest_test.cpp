#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "prepare/core/matrix.hpp"
#include "prepare/forest/cv.hpp"
#include "prepare/forest/gini.hpp"
#include "prepare/forest/importance.hpp"
#include "prepare/forest/metrics.hpp"
#include "prepare/forest/slip_forest.hpp"
#include "prepare/forest/sweep.hpp"
#include "prepare/forest/train.hpp"
#include "prepare/forest/tree.hpp"
#include "prepare/synth/generator.hpp"

namespace prepare::forest {
namespace {

struct Data {
  DenseMatrix X;
  std::vector<std::uint8_t> y;
};

// Label = [x0 + 0.5 x1 + noise > 0]; remaining columns are noise.
Data linear_data(std::size_t n, std::size_t dim, double label_noise, unsigned seed, int round_to = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Data d{DenseMatrix(n, dim), {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      double v = nd(rng);
      if (round_to > 0) v = std::round(v * round_to) / round_to;
      d.X.row(i)[j] = v;
    }
    const double s = d.X(i, 0) + (dim > 1 ? 0.5 * d.X(i, 1) : 0.0) + label_noise * nd(rng);
    d.y.push_back(s > 0 ? 1 : 0);
  }
  return d;
}

Data one_d_example() {
  Data d{DenseMatrix(4, 1), {0, 0, 1, 1}};
  for (std::size_t i = 0; i < 4; ++i) d.X.row(i)[0] = static_cast<double>(i);
  return d;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

double brute_gini(double a, double b) {
  const double n = a + b;
  return 1.0 - (a / n) * (a / n) - (b / n) * (b / n);
}

// Exhaustive G over every (feature, midpoint of consecutive unique values).
double brute_best_g(const Data& d, const std::vector<std::size_t>& rows, std::size_t dim) {
  double best = INFINITY;
  for (std::size_t f = 0; f < dim; ++f) {
    std::set<double> uniq;
    for (auto r : rows) uniq.insert(d.X(r, f));
    std::vector<double> u(uniq.begin(), uniq.end());
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
      const double z = 0.5 * (u[i] + u[i + 1]);
      double ln = 0, ly = 0, rn = 0, ry = 0;
      for (auto r : rows) {
        const bool left = d.X(r, f) < z;
        (left ? (d.y[r] ? ly : ln) : (d.y[r] ? ry : rn)) += 1.0;
      }
      const double n = ln + ly + rn + ry;
      best = std::min(best, (ln + ly) / n * brute_gini(ln, ly) + (rn + ry) / n * brute_gini(rn, ry));
    }
  }
  return best;
}

// Recursive per-tree traversal written independently of DecisionTree::route.
double oracle_tree(const DecisionTree& t, std::span<const double> x) {
  std::function<double(std::size_t)> walk = [&](std::size_t i) {
    const auto& n = t.nodes()[i];
    if (n.feature < 0) return static_cast<double>(n.counts[1]) / static_cast<double>(n.counts[0] + n.counts[1]);
    return walk(static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right));
  };
  return walk(0);
}

TreeNode leaf(std::uint32_t no, std::uint32_t yes) {
  TreeNode n;
  n.counts = {no, yes};
  return n;
}

TEST(Gini, KnownValues) {
  EXPECT_DOUBLE_EQ(gini({2, 2}), 0.5);
  EXPECT_DOUBLE_EQ(gini({4, 0}), 0.0);
  EXPECT_DOUBLE_EQ(gini({1, 3}), 1.0 - (0.25 * 0.25 + 0.75 * 0.75));
  EXPECT_DOUBLE_EQ(gini({1, 3}), 0.375);
  EXPECT_THROW(gini({0, 0}), EmptyNode);
}

TEST(BestSplit, OneDimensionalExample) {
  const auto d = one_d_example();
  const std::vector<std::size_t> feats{0};
  const auto s = best_split(d.X, d.y, iota_n(4), feats);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->feature, 0u);
  EXPECT_DOUBLE_EQ(s->threshold, 1.5);
  EXPECT_DOUBLE_EQ(s->weighted_impurity, 0.0);
}

TEST(BestSplit, PureOrConstantNodesHaveNoSplit) {
  auto d = one_d_example();
  const std::vector<std::size_t> feats{0};
  d.y = {1, 1, 1, 1};
  EXPECT_FALSE(best_split(d.X, d.y, iota_n(4), feats).has_value());
  DenseMatrix flat(4, 1, 2.0);
  const std::vector<std::uint8_t> y{0, 1, 0, 1};
  EXPECT_FALSE(best_split(flat, y, iota_n(4), feats).has_value());
  EXPECT_FALSE(best_split(d.X, y, std::vector<std::size_t>{1}, feats).has_value());
}

TEST(BestSplit, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 49, dim = 1 + rng() % 8;
    const auto d = linear_data(n, dim, 0.7, static_cast<unsigned>(trial), 4);
    const auto rows = iota_n(n);
    const auto s = best_split(d.X, d.y, rows, iota_n(dim));
    const double expected = brute_best_g(d, rows, dim);
    if (!s) {
      EXPECT_TRUE(std::isinf(expected) || std::count(d.y.begin(), d.y.end(), 1) % static_cast<long>(n) == 0);
      continue;
    }
    EXPECT_NEAR(s->weighted_impurity, expected, 1e-12);
    double pn = 0, py = 0;
    for (auto v : d.y) (v ? py : pn) += 1.0;
    EXPECT_LE(s->weighted_impurity, brute_gini(pn, py) + 1e-12);
    // The threshold lies strictly between observed values.
    bool below = false, above = false;
    for (auto r : rows) {
      below = below || d.X(r, s->feature) < s->threshold;
      above = above || d.X(r, s->feature) > s->threshold;
    }
    EXPECT_TRUE(below && above);
  }
}

TEST(BestSplit, RejectsUnknownFeature) {
  const auto d = one_d_example();
  EXPECT_THROW(best_split(d.X, d.y, iota_n(4), std::vector<std::size_t>{1}), IndexError);
}

TEST(SortByValue, AgreesWithStableSort) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 100.0);
  for (std::size_t n : {10u, 255u, 256u, 5000u}) {
    std::vector<detail::ValueLabel> buf(n), tmp;
    for (std::size_t i = 0; i < n; ++i) {
      double v = nd(rng);
      if (i % 7 == 0) v = std::round(v);  // duplicates
      if (i % 11 == 0) v = 1e300 * (i % 2 ? 1 : -1);
      buf[i] = {v, static_cast<std::uint32_t>(i)};
    }
    auto expected = buf;
    std::stable_sort(expected.begin(), expected.end(), [](auto& a, auto& b) { return a.value < b.value; });
    detail::sort_by_value(buf, tmp);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(buf[i].value, expected[i].value);
      if (n >= 256) {
        ASSERT_EQ(buf[i].label, expected[i].label);
      }
    }
  }
}

TEST(FitForest, StumpOnOneDimensionalExample) {
  const auto d = one_d_example();
  ForestOptions opts;
  opts.num_trees = 1;
  opts.max_depth = 1;
  opts.features_per_split = FeaturesPerSplit::all();
  bool saw_full_bootstrap = false;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    opts.seed = seed;
    const auto f = fit_forest(d.X, d.y, opts);
    const auto& nodes = f.trees()[0].nodes();
    // Exhaustive stump search over the bootstrap multiset.
    const auto boot = bootstrap_rows(derive_seed(seed, 0), 4);
    std::vector<std::size_t> rows(boot.begin(), boot.end());
    double yes = 0;
    for (auto r : rows) yes += d.y[r];
    if (yes == 0 || yes == 4) {
      EXPECT_EQ(nodes.size(), 1u);
      continue;
    }
    ASSERT_EQ(nodes.size(), 3u);
    std::set<double> vals;
    for (auto r : rows) vals.insert(d.X(r, 0));
    double best_g = INFINITY, best_z = 0;
    for (auto it = vals.begin(); std::next(it) != vals.end(); ++it) {
      const double z = 0.5 * (*it + *std::next(it));
      double ln = 0, ly = 0, rn = 0, ry = 0;
      for (auto r : rows) (d.X(r, 0) < z ? (d.y[r] ? ly : ln) : (d.y[r] ? ry : rn)) += 1;
      const double g = (ln + ly) / 4 * brute_gini(ln, ly) + (rn + ry) / 4 * brute_gini(rn, ry);
      if (g < best_g) best_g = g, best_z = z;
    }
    EXPECT_DOUBLE_EQ(nodes[0].threshold, best_z);
    if (std::set<std::size_t>(rows.begin(), rows.end()).size() == 4) {
      saw_full_bootstrap = true;
      EXPECT_DOUBLE_EQ(nodes[0].threshold, 1.5);
      for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(f.predict_proba(row_vector(d.X, i)) > 0.5, d.y[i] == 1);
    }
  }
  EXPECT_TRUE(saw_full_bootstrap);
}

TEST(FitForest, SameSeedSameModel) {
  const auto d = linear_data(300, 6, 0.3, 1);
  ForestOptions opts{20, 8, {}, 2, 77};
  EXPECT_EQ(fit_forest(d.X, d.y, opts).serialize(), fit_forest(d.X, d.y, opts).serialize());
  opts.seed = 78;
  EXPECT_NE(fit_forest(d.X, d.y, opts).serialize(), fit_forest(d.X, d.y, {20, 8, {}, 2, 77}).serialize());
}

TEST(FitForest, OutOfBagShareNearOneOverE) {
  const std::size_t n = 1000, trees = 1000;
  double total = 0.0;
  for (std::size_t t = 0; t < trees; ++t) {
    const auto rows = bootstrap_rows(derive_seed(9, t), n);
    const std::set<std::uint32_t> uniq(rows.begin(), rows.end());
    const double oob = 1.0 - static_cast<double>(uniq.size()) / static_cast<double>(n);
    EXPECT_GT(oob, 0.0);
    EXPECT_NEAR(oob, std::exp(-1.0), 0.05);
    total += oob;
  }
  EXPECT_NEAR(total / static_cast<double>(trees), 0.368, 0.01);

  // Every tree of a fitted forest trains on its own bootstrap: root counts
  // match the bootstrap class totals.
  const auto d = linear_data(200, 3, 0.5, 2);
  const auto f = fit_forest(d.X, d.y, {1000, 30, {}, 2, 9});
  for (std::size_t t = 0; t < f.num_trees(); t += 97) {
    const auto rows = bootstrap_rows(f.tree_seeds()[t], 200);
    std::uint32_t yes = 0;
    for (auto r : rows) yes += d.y[r];
    EXPECT_EQ(f.trees()[t].nodes()[0].counts[1], yes);
  }
}

TEST(FitForest, NodeCountsAndDepthLimits) {
  const auto d = linear_data(400, 5, 0.5, 3);
  const auto f = fit_forest(d.X, d.y, {10, 6, {}, 2, 1});
  for (const auto& t : f.trees()) {
    EXPECT_LE(t.depth(), 6u);
    for (const auto& n : t.nodes()) {
      if (n.is_leaf()) continue;
      const auto& l = t.nodes()[static_cast<std::size_t>(n.left)];
      const auto& r = t.nodes()[static_cast<std::size_t>(n.right)];
      EXPECT_EQ(n.total(), l.total() + r.total());
      EXPECT_EQ(l.depth, n.depth + 1);
    }
  }
}

TEST(FitForest, DeeperTreesNeverRaiseLeafImpurity) {
  const auto d = linear_data(500, 4, 1.0, 4);
  const auto f = fit_forest(d.X, d.y, {5, 12, {}, 2, 2});
  for (const auto& t : f.trees()) {
    double prev = INFINITY;
    for (std::size_t depth = 0; depth <= 12; ++depth) {
      const auto cut = t.truncated(depth);
      double weighted = 0.0;
      for (const auto& n : cut.nodes())
        if (n.is_leaf()) weighted += n.total() * n.impurity();
      EXPECT_LE(weighted, prev + 1e-9);
      prev = weighted;
    }
  }
}

TEST(FitForest, FeatureMaskRestrictsSplits) {
  const auto d = linear_data(300, 8, 0.3, 5);
  const std::vector<std::size_t> mask{1, 4, 6};
  const auto f = fit_forest(d.X, d.y, {15, 8, {}, 2, 3}, mask);
  EXPECT_EQ(f.feature_mask(), mask);
  EXPECT_EQ(f.input_dim(), 8u);
  for (const auto& t : f.trees())
    for (const auto& n : t.nodes())
      if (!n.is_leaf()) {
        EXPECT_TRUE(std::count(mask.begin(), mask.end(), static_cast<std::size_t>(n.feature)));
      }
  EXPECT_THROW(fit_forest(d.X, d.y, {1, 2, {}, 2, 0}, {9}), IndexError);
}

TEST(FitForest, ErrorCases) {
  auto d = linear_data(50, 2, 0.0, 6);
  EXPECT_THROW(fit_forest(d.X, d.y, {0, 5, {}, 2, 0}), InvalidConfig);
  EXPECT_THROW(fit_forest(d.X, d.y, {5, 0, {}, 2, 0}), InvalidConfig);
  d.y.assign(50, 1);
  EXPECT_THROW(fit_forest(d.X, d.y, {5, 5, {}, 2, 0}), DegenerateLabels);
  d.y.pop_back();
  EXPECT_THROW(fit_forest(d.X, d.y, {5, 5, {}, 2, 0}), ShapeError);
}

TEST(FeaturesPerSplit, ParseAndResolve) {
  EXPECT_EQ(FeaturesPerSplit::parse("sqrt").resolve(2160), 46u);
  EXPECT_EQ(FeaturesPerSplit::parse("all").resolve(2160), 2160u);
  EXPECT_EQ(FeaturesPerSplit::parse("12").resolve(2160), 12u);
  EXPECT_EQ(FeaturesPerSplit::parse("12").resolve(5), 5u);
  EXPECT_THROW(FeaturesPerSplit::parse("0"), InvalidConfig);
  EXPECT_THROW(FeaturesPerSplit::parse("half"), InvalidConfig);
}

TEST(PredictProba, MeanOfLeafFractions) {
  const SlipForest f({DecisionTree({leaf(4, 1)}), DecisionTree({leaf(2, 3)})}, {0, 1}, 3, {});
  EXPECT_DOUBLE_EQ(f.predict_proba(std::vector<double>{0, 0, 0}), 0.4);
  const SlipForest pure({DecisionTree({leaf(0, 7)}), DecisionTree({leaf(0, 1)})}, {0, 1}, 3, {});
  EXPECT_EQ(pure.predict_proba(std::vector<double>{0, 0, 0}), 1.0);
  EXPECT_THROW(f.predict_proba(std::vector<double>{0, 0}), ShapeError);
}

TEST(PredictProba, EqualsPerTreeOracle) {
  const auto d = linear_data(400, 6, 0.5, 7);
  const auto f = fit_forest(d.X, d.y, {25, 10, {}, 2, 4});
  const auto test = linear_data(100, 6, 0.5, 8);
  for (std::size_t i = 0; i < test.X.rows(); ++i) {
    const auto x = row_vector(test.X, i);
    double sum = 0.0;
    for (const auto& t : f.trees()) sum += oracle_tree(t, x);
    const double p = f.predict_proba(x);
    EXPECT_EQ(p, sum / 25.0);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(SlipForest, TruncationEqualsSmallerFit) {
  const auto d = linear_data(300, 10, 0.6, 9);
  ForestOptions big{30, 12, {}, 2, 123};
  const auto full = fit_forest(d.X, d.y, big);
  for (auto [p, depth] : {std::pair<std::size_t, std::size_t>{1, 1}, {7, 4}, {30, 12}, {12, 9}}) {
    ForestOptions small = big;
    small.num_trees = p;
    small.max_depth = depth;
    EXPECT_EQ(full.truncated(p, depth).serialize(), fit_forest(d.X, d.y, small).serialize());
  }
  EXPECT_THROW(full.truncated(31, 5), InvalidConfig);
  EXPECT_THROW(full.truncated(5, 13), InvalidConfig);
}

TEST(SlipForest, PredictGridMatchesSingleQueries) {
  const auto d = linear_data(300, 5, 0.6, 10);
  const auto f = fit_forest(d.X, d.y, {40, 15, {}, 2, 5});
  const std::vector<std::size_t> ps{1, 10, 40}, ds{2, 5, 15};
  std::vector<double> out(9);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto x = row_vector(d.X, i);
    f.predict_grid(x, ps, ds, out);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_EQ(out[a * 3 + b], f.predict_proba(x, ps[a], ds[b]));
        EXPECT_EQ(out[a * 3 + b], f.truncated(ps[a], ds[b]).predict_proba(x));
      }
  }
}

TEST(SlipForest, SerializationRoundTripIsBitExact) {
  const auto d = linear_data(300, 7, 0.4, 11);
  auto f = fit_forest(d.X, d.y, {12, 9, FeaturesPerSplit::fixed(3), 2, 6}, {0, 1, 2, 5});
  f.set_metadata({60, 12, 0.06});
  const auto back = SlipForest::deserialize(f.serialize());
  EXPECT_EQ(back.serialize(), f.serialize());
  EXPECT_EQ(back.feature_mask(), f.feature_mask());
  EXPECT_EQ(back.metadata().k_samples, 60u);
  EXPECT_EQ(back.metadata().lookahead_n, 12u);
  for (std::size_t i = 0; i < d.X.rows(); ++i) {
    const auto x = row_vector(d.X, i);
    EXPECT_EQ(back.predict_proba(x), f.predict_proba(x));
  }
  EXPECT_THROW(SlipForest::deserialize("{}"), SchemaMismatch);
  EXPECT_THROW(SlipForest::deserialize("not json"), SchemaMismatch);
}

TEST(MdiImportance, SingleInformativeFeature) {
  Data d{DenseMatrix(200, 6, 1.0), {}};
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < 200; ++i) {
    d.X.row(i)[3] = nd(rng);
    d.y.push_back(d.X(i, 3) > 0.2 ? 1 : 0);
  }
  const auto imp = mdi_importance(fit_forest(d.X, d.y, {10, 5, {}, 2, 1}));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(imp[j], j == 3 ? 1.0 : 0.0);
}

TEST(MdiImportance, SignalFeatureRanksFirstAndSumsToOne) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  Data d{DenseMatrix(600, 10), {}};
  for (std::size_t i = 0; i < 600; ++i) {
    for (std::size_t j = 0; j < 10; ++j) d.X.row(i)[j] = nd(rng);
    d.y.push_back(d.X(i, 0) > 0 ? 1 : 0);
  }
  const auto imp = mdi_importance(fit_forest(d.X, d.y, {50, 10, {}, 2, 2}));
  double sum = 0.0;
  for (auto v : imp.values) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(imp.ranking().front(), 0u);
}

TEST(MdiImportance, AllLeafForestHasNoSplits) {
  const SlipForest f({DecisionTree({leaf(3, 1)})}, {0}, 4, {});
  EXPECT_THROW(mdi_importance(f), NoSplits);
}

TEST(AblateFeatures, MassPolicy) {
  EXPECT_EQ(ablate_features({{0.01, 0.96, 0.01, 0.01, 0.01}}, 0.95), (std::vector<std::size_t>{1}));
  const ImportanceVector uniform{std::vector<double>(10, 0.1)};
  EXPECT_EQ(ablate_features(uniform, 0.95).size(), 10u);
  EXPECT_EQ(ablate_features({{0.5, 0.2, 0.3}}, 0.8), (std::vector<std::size_t>{0, 2}));
  EXPECT_THROW(ablate_features(uniform, 0.0), InvalidConfig);
  EXPECT_THROW(ablate_features(uniform, 1.5), InvalidConfig);
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> decisions(std::size_t tp, std::size_t fp,
                                                                          std::size_t fn, std::size_t tn) {
  std::vector<std::uint8_t> pred, truth;
  auto add = [&](std::size_t n, int p, int t) {
    for (std::size_t i = 0; i < n; ++i) pred.push_back(p), truth.push_back(t);
  };
  add(tp, 1, 1);
  add(fp, 1, 0);
  add(fn, 0, 1);
  add(tn, 0, 0);
  return {pred, truth};
}

TEST(Metrics, CountBasedValues) {
  const auto [p, t] = decisions(95, 5, 24, 500);
  const auto r = metrics(p, t);
  EXPECT_DOUBLE_EQ(r.precision, 0.95);
  EXPECT_NEAR(r.recall, 0.798, 1e-3);
  EXPECT_DOUBLE_EQ(r.recall, 95.0 / 119.0);
  EXPECT_NEAR(r.f_score, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-12);
  EXPECT_EQ(r.confusion, (Confusion{95, 5, 24, 500}));
}

TEST(Metrics, PerfectAndBalancedCases) {
  const auto [p, t] = decisions(10, 0, 0, 10);
  const auto perfect = metrics(p, t);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f_score, 1.0);
  const auto [p2, t2] = decisions(1, 1, 1, 0);
  EXPECT_DOUBLE_EQ(metrics(p2, t2).f_score, 0.5);
}

TEST(Metrics, ZeroDenominatorsAreFlagged) {
  const auto [p, t] = decisions(0, 0, 3, 5);
  const auto r = metrics(p, t);
  EXPECT_TRUE(r.precision_undefined);
  EXPECT_FALSE(r.recall_undefined);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.f_score, 0.0);
  const auto [p2, t2] = decisions(0, 0, 0, 5);
  EXPECT_TRUE(metrics(p2, t2).recall_undefined);
}

TEST(Metrics, LengthMismatchIsShapeError) {
  EXPECT_THROW(metrics(std::vector<std::uint8_t>{1, 0}, std::vector<std::uint8_t>{1}), ShapeError);
  EXPECT_THROW(metrics(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}), ShapeError);
}

TEST(Metrics, FoldAggregation) {
  const std::vector<Confusion> folds{{8, 2, 2, 88}, {5, 0, 5, 90}, {9, 1, 0, 90}};
  const auto r = aggregate_folds(folds);
  EXPECT_EQ(r.confusion, (Confusion{22, 3, 7, 268}));
  EXPECT_DOUBLE_EQ(r.precision, 22.0 / 25.0);
  EXPECT_NEAR(r.f_score, 2 * r.precision * r.recall / (r.precision + r.recall), 1e-12);
  const double f[3] = {0.8, 2 * 1.0 * 0.5 / 1.5, 2 * 0.9 * 1.0 / 1.9};
  const double mean = (f[0] + f[1] + f[2]) / 3;
  double ss = 0.0;
  for (double v : f) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(r.f_mean, mean, 1e-12);
  EXPECT_NEAR(r.f_std, std::sqrt(ss / 3), 1e-12);
  ASSERT_EQ(r.per_fold.size(), 3u);
}

TEST(StratifiedFolds, PartitionIsExactAndStratified) {
  std::vector<std::uint8_t> y(103, 0);
  for (std::size_t i = 0; i < 103; i += 6) y[i] = 1;
  const auto folds = stratified_folds(y, 5, 4);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(y.size(), 0);
  std::vector<std::size_t> pos;
  for (const auto& f : folds) {
    EXPECT_EQ(f.train.size() + f.test.size(), y.size());
    std::size_t p = 0;
    for (auto i : f.test) ++seen[i], p += y[i];
    pos.push_back(p);
    std::vector<std::size_t> all;
    std::merge(f.train.begin(), f.train.end(), f.test.begin(), f.test.end(), std::back_inserter(all));
    EXPECT_EQ(all, iota_n(y.size()));
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1u);
  EXPECT_EQ(stratified_folds(y, 5, 4)[2].test, folds[2].test);
}

TEST(StratifiedFolds, TooFewMinorityIsInsufficientData) {
  std::vector<std::uint8_t> y(50, 0);
  y[3] = y[9] = y[20] = 1;
  EXPECT_THROW(stratified_folds(y, 5, 0), InsufficientData);
  EXPECT_THROW(stratified_folds(y, 1, 0), InvalidConfig);
}

CvOptions small_cv(std::vector<std::size_t> ps, std::vector<std::size_t> ds) {
  CvOptions o;
  o.grid.num_trees = std::move(ps);
  o.grid.max_depth = std::move(ds);
  o.seed = 17;
  return o;
}

Data imbalanced(std::size_t n, unsigned seed) {
  auto d = linear_data(n, 4, 0.4, seed);
  // Keep roughly one positive in six to exercise oversampling.
  for (std::size_t i = 0; i < n; ++i)
    if (d.y[i] && d.X(i, 0) < 0.6) d.y[i] = 0;
  return d;
}

TEST(GridSearchCv, FullGridEvaluatesEveryCellOnEveryFold) {
  const auto d = imbalanced(120, 20);
  const auto r = grid_search_cv(d.X, d.y, small_cv({50, 100, 200, 500, 1000}, {5, 10, 15, 20, 25}));
  EXPECT_EQ(r.cells.size(), 25u);
  EXPECT_EQ(r.evaluations, 125u);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.report.per_fold.size(), 5u);
    EXPECT_GE(r.best.f_mean, c.report.f_mean);
  }
}

TEST(GridSearchCv, SingleCellIsReturned) {
  const auto d = imbalanced(150, 21);
  const auto r = grid_search_cv(d.X, d.y, small_cv({30}, {6}));
  EXPECT_EQ(r.best_num_trees, 30u);
  EXPECT_EQ(r.best_max_depth, 6u);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].report.f_mean, r.best.f_mean);
  EXPECT_EQ(r.evaluations, 5u);
}

TEST(GridSearchCv, CellsMatchIndependentlyFittedForests) {
  const auto d = imbalanced(150, 22);
  const auto opts = small_cv({5, 20}, {3, 8});
  const auto r = grid_search_cv(d.X, d.y, opts);
  const auto folds = stratified_folds(d.y, 5, derive_seed(opts.seed, 0xF01D));
  // Recompute the (5 trees, depth 3) cell with forests grown at that size.
  std::vector<Confusion> conf;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    RowView train(d.X, folds[f].train);
    std::vector<std::uint8_t> yt;
    for (auto i : folds[f].train) yt.push_back(d.y[i]);
    auto os = opts.oversample;
    os.svm.seed = derive_seed(opts.seed, 0x5F00 + f);
    os.synthesis.seed = derive_seed(opts.seed, 0x5E00 + f);
    const auto b = oversample::balance_classes(train, yt, os);
    const auto forest = fit_forest(b.X, b.y, {5, 3, {}, 2, derive_seed(opts.seed, 0x7EE0 + f)});
    std::vector<std::uint8_t> pred, truth;
    for (auto i : folds[f].test) {
      pred.push_back(forest.predict_proba(row_vector(d.X, i)) > 0.5);
      truth.push_back(d.y[i]);
    }
    conf.push_back(confusion_of(pred, truth));
  }
  const auto expected = aggregate_folds(conf);
  EXPECT_EQ(r.cells[0].num_trees, 5u);
  EXPECT_EQ(r.cells[0].max_depth, 3u);
  EXPECT_EQ(r.cells[0].report.confusion, expected.confusion);
  EXPECT_EQ(r.cells[0].report.f_mean, expected.f_mean);
}

TEST(GridSearchCv, TiesGoToSmallerForests) {
  // Perfectly separable: every cell scores F = 1.
  Data d{DenseMatrix(100, 2), {}};
  for (std::size_t i = 0; i < 100; ++i) {
    d.X.row(i)[0] = static_cast<double>(i >= 80 ? i + 1000 : i);
    d.X.row(i)[1] = static_cast<double>(i % 3);
    d.y.push_back(i >= 80);
  }
  const auto r = grid_search_cv(d.X, d.y, small_cv({40, 10, 20}, {9, 4}));
  EXPECT_EQ(r.best.f_mean, 1.0);
  EXPECT_EQ(r.best_num_trees, 10u);
  EXPECT_EQ(r.best_max_depth, 4u);
}

TEST(GridSearchCv, OversamplingNeverTouchesTestRows) {
  const auto d = imbalanced(200, 23);
  const auto r = grid_search_cv(d.X, d.y, small_cv({10}, {5}));
  ASSERT_EQ(r.audit.size(), 5u);
  for (const auto& a : r.audit) {
    const std::set<std::size_t> test(a.fold.test.begin(), a.fold.test.end());
    EXPECT_EQ(a.augmented_rows, a.fold.train.size() + a.synthesis.generated.size());
    EXPECT_FALSE(a.synthesis.generated.empty());
    for (const auto& g : a.synthesis.generated) {
      ASSERT_LT(g.sv_index, a.fold.train.size());
      ASSERT_LT(g.neighbor_index, a.fold.train.size());
      EXPECT_FALSE(test.count(a.fold.train[g.sv_index]));
      EXPECT_FALSE(test.count(a.fold.train[g.neighbor_index]));
    }
  }
}

TEST(GridSearchCv, InvalidGrids) {
  const auto d = imbalanced(60, 24);
  EXPECT_THROW(grid_search_cv(d.X, d.y, small_cv({}, {5})), InvalidConfig);
  EXPECT_THROW(grid_search_cv(d.X, d.y, small_cv({0}, {5})), InvalidConfig);
  auto o = small_cv({5}, {5});
  o.grid.folds = 1;
  EXPECT_THROW(grid_search_cv(d.X, d.y, o), InvalidConfig);
}

TEST(TrainSlipModel, AblationKeepsImportantFeaturesAndFitsFinal) {
  const auto d = imbalanced(200, 25);
  TrainOptions o;
  o.cv = small_cv({20}, {6});
  o.importance_trees = 30;
  o.compare_full = true;
  const auto r = train_slip_model(d.X, d.y, o);
  ASSERT_TRUE(r.model.has_value());
  ASSERT_TRUE(r.full_cv && r.ablated_cv);
  EXPECT_FALSE(r.feature_mask.empty());
  EXPECT_TRUE(std::count(r.feature_mask.begin(), r.feature_mask.end(), 0u));
  EXPECT_EQ(r.model->feature_mask(), r.feature_mask);
  EXPECT_EQ(&r.selected(), &*r.ablated_cv);
  EXPECT_EQ(r.final_synthesis.final_minority_count, r.final_synthesis.final_majority_count);
}

TEST(Lookahead, WholeSampleShiftsOnly) {
  EXPECT_EQ(lookahead_samples(720, 0.06), 12u);
  EXPECT_EQ(lookahead_samples(0, 0.06), 0u);
  try {
    lookahead_samples(700, 0.06);
    FAIL() << "expected InvalidConfig";
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("720"), std::string::npos) << e.what();
  }
  EXPECT_THROW(lookahead_samples(-60, 0.06), InvalidConfig);
  EXPECT_EQ(history_samples(3.6, 0.06), 60u);
  EXPECT_EQ(history_samples(0.0, 0.06), 1u);
}

TEST(SweepHistory, PrecursorHistoryRaisesFScore) {
  // Slips have 1 s precursors and short-lived transients, so a single frame
  // sees little while a 1 s window sees the build-up.
  synth::TransientShape shape;
  shape.transient_decay_frames = 3;
  const auto gait = synth::GaitProfile::trot();
  std::vector<prepare::Run> runs;
  LabelSet labels;
  for (int r = 0; r < 2; ++r) {
    const auto inj = synth::plan_injections(2500, 0.06, {}, 100 + r);
    auto g = synth::generate_run(gait, 150, inj, 7 + r, "run" + std::to_string(r), 0.06, shape);
    for (const auto& l : g.labels) labels.add(g.run.id(), l);
    runs.push_back(std::move(g.run));
  }
  TrainOptions o;
  o.cv = small_cv({20}, {10});
  o.ablate = false;
  const std::vector<double> seconds{0.0, 1.02};
  const auto rows = sweep_history(runs, labels, seconds, 0, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].k_samples, 1u);
  EXPECT_EQ(rows[1].k_samples, 17u);
  const double f0 = rows[0].full->best.f_mean, f1 = rows[1].full->best.f_mean;
  EXPECT_GE(f1, f0 + 0.1) << "k=1 F " << f0 << ", k=17 F " << f1;

  const auto csv = sweep_to_csv(rows, false);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "length_or_lookahead,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(SweepLookahead, ZeroLookaheadMatchesHistoryEndpoint) {
  std::vector<prepare::Run> runs;
  LabelSet labels;
  const auto inj = synth::plan_injections(1500, 0.06, {}, 3);
  auto g = synth::generate_run(synth::GaitProfile::trot(), 90, inj, 4, "r", 0.06);
  for (const auto& l : g.labels) labels.add("r", l);
  runs.push_back(std::move(g.run));
  TrainOptions o;
  o.cv = small_cv({5}, {4});
  o.ablate = false;
  const std::vector<double> h{0.3};
  const std::vector<double> la{0.0, 120.0};
  const auto hist = sweep_history(runs, labels, h, 0, o);
  const auto ahead = sweep_lookahead(runs, labels, 0.3, la, o);
  ASSERT_EQ(ahead.size(), 2u);
  EXPECT_EQ(ahead[0].full->best.confusion, hist[0].full->best.confusion);
  EXPECT_EQ(ahead[1].lookahead_n, 2u);
  const std::vector<double> bad{100.0};
  EXPECT_THROW(sweep_lookahead(runs, labels, 0.3, bad, o), InvalidConfig);
}

}  // namespace
}  // namespace prepare::forest
