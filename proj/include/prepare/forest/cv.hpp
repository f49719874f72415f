#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"
#include "prepare/forest/metrics.hpp"
#include "prepare/forest/slip_forest.hpp"
#include "prepare/oversample/borderline.hpp"

namespace prepare::forest {

struct Hyperparams {
  std::vector<std::size_t> num_trees{50, 100, 200, 500, 1000};
  std::vector<std::size_t> max_depth{5, 10, 15, 20, 25};
  std::size_t folds = 5;

  void validate() const {
    if (num_trees.empty() || max_depth.empty()) throw InvalidConfig("hyperparameter grids must be non-empty");
    if (folds < 2) throw InvalidConfig("need at least 2 folds");
    for (auto p : num_trees)
      if (p == 0) throw InvalidConfig("num_trees grid entries must be >= 1");
    for (auto d : max_depth)
      if (d == 0) throw InvalidConfig("max_depth grid entries must be >= 1");
  }
};

struct Fold {
  std::vector<std::size_t> train;  // sorted global row indices
  std::vector<std::size_t> test;
};

/// Stratified k-fold split: each class is shuffled independently and dealt
/// round-robin, so every fold keeps the class proportions and every sample
/// lands in exactly one test fold.
inline std::vector<Fold> stratified_folds(std::span<const std::uint8_t> y, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidConfig("need at least 2 folds");
  std::vector<std::size_t> fold_of(y.size());
  for (std::uint8_t cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if ((y[i] != 0) == (cls == 1)) idx.push_back(i);
    if (idx.size() < folds)
      throw InsufficientData("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                             " samples, fewer than " + std::to_string(folds) + " folds");
    Rng rng(derive_seed(seed, cls));
    shuffle(rng, idx);
    for (std::size_t k = 0; k < idx.size(); ++k) fold_of[idx[k]] = k % folds;
  }
  std::vector<Fold> out(folds);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t f = 0; f < folds; ++f) (f == fold_of[i] ? out[f].test : out[f].train).push_back(i);
  return out;
}

struct CvOptions {
  Hyperparams grid{};
  oversample::OversampleOptions oversample{};
  FeaturesPerSplit features_per_split{};
  std::size_t min_samples_split = 2;
  std::vector<std::size_t> feature_mask;  // empty = all features
  double threshold = 0.5;                 // p_slip > threshold counts as a slip decision
  std::uint64_t seed = 0;
};

struct CellResult {
  std::size_t num_trees = 0;
  std::size_t max_depth = 0;
  MetricsReport report;
};

/// What happened inside one fold, kept for auditing data hygiene.
struct FoldAudit {
  Fold fold;
  /// Synthetic rows generated from the training portion; parent indices are
  /// positions within fold.train.
  oversample::SynthesisReport synthesis;
  std::size_t augmented_rows = 0;
};

struct CvResult {
  std::size_t best_num_trees = 0;
  std::size_t best_max_depth = 0;
  MetricsReport best;
  std::vector<CellResult> cells;  // P-major, both ascending
  std::size_t evaluations = 0;    // (cell, fold) pairs scored
  std::vector<FoldAudit> audit;
};

/// Grid-search cross-validation. In every fold only the training rows are
/// oversampled; test rows are scored as they are. One forest with the largest
/// P and depth is grown per fold and every grid cell is scored through its
/// exact (prefix, truncation) equivalent. The best cell has the highest mean
/// fold F-score, ties going to smaller P, then smaller depth.
template <FeatureMatrix M>
CvResult grid_search_cv(const M& X, std::span<const std::uint8_t> y, const CvOptions& opts) {
  opts.grid.validate();
  if (y.size() != X.rows()) throw ShapeError("label count does not match sample count");
  auto ps = opts.grid.num_trees;
  auto ds = opts.grid.max_depth;
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  std::sort(ds.begin(), ds.end());
  ds.erase(std::unique(ds.begin(), ds.end()), ds.end());

  CvResult result;
  const auto folds = stratified_folds(y, opts.grid.folds, derive_seed(opts.seed, 0xF01D));
  std::vector<std::vector<Confusion>> confusions(ps.size() * ds.size());
  std::vector<double> row(X.cols());

  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& fold = folds[f];
    RowView<M> train(X, fold.train);
    std::vector<std::uint8_t> y_train(fold.train.size());
    for (std::size_t i = 0; i < fold.train.size(); ++i) y_train[i] = y[fold.train[i]];

    auto os = opts.oversample;
    os.svm.seed = derive_seed(opts.seed, 0x5F00 + f);
    os.synthesis.seed = derive_seed(opts.seed, 0x5E00 + f);
    auto balanced = oversample::balance_classes(train, y_train, os);

    ForestOptions fo;
    fo.num_trees = ps.back();
    fo.max_depth = ds.back();
    fo.features_per_split = opts.features_per_split;
    fo.min_samples_split = opts.min_samples_split;
    fo.seed = derive_seed(opts.seed, 0x7EE0 + f);
    const auto forest = fit_forest(balanced.X, balanced.y, fo, opts.feature_mask);

    std::vector<std::vector<std::uint8_t>> decisions(confusions.size(), std::vector<std::uint8_t>(fold.test.size()));
    std::vector<std::uint8_t> truth(fold.test.size());
    std::vector<double> probs(confusions.size());
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
      copy_row(X, fold.test[i], row);
      truth[i] = y[fold.test[i]];
      forest.predict_grid(row, ps, ds, probs);
      for (std::size_t c = 0; c < probs.size(); ++c) decisions[c][i] = probs[c] > opts.threshold ? 1 : 0;
    }
    for (std::size_t c = 0; c < confusions.size(); ++c) {
      confusions[c].push_back(confusion_of(decisions[c], truth));
      ++result.evaluations;
    }
    result.audit.push_back({fold, std::move(balanced.report), balanced.X.rows()});
  }

  bool have_best = false;
  for (std::size_t a = 0; a < ps.size(); ++a) {
    for (std::size_t b = 0; b < ds.size(); ++b) {
      CellResult cell{ps[a], ds[b], aggregate_folds(confusions[a * ds.size() + b])};
      if (!have_best || cell.report.f_mean > result.best.f_mean) {
        result.best = cell.report;
        result.best_num_trees = cell.num_trees;
        result.best_max_depth = cell.max_depth;
        have_best = true;
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace prepare::forest
