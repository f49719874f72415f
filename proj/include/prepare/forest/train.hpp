#pragma once

#include <optional>
#include <span>
#include <vector>

#include "prepare/forest/cv.hpp"
#include "prepare/forest/importance.hpp"
#include "prepare/forest/slip_forest.hpp"
#include "prepare/oversample/borderline.hpp"

namespace prepare::forest {

struct TrainOptions {
  CvOptions cv{};
  bool ablate = true;
  double ablation_mass = 0.95;
  std::size_t importance_trees = 100;
  /// Also cross-validate the full-feature model when ablating.
  bool compare_full = false;
};

struct TrainResult {
  std::optional<SlipForest> model;
  std::optional<CvResult> full_cv;
  std::optional<CvResult> ablated_cv;
  std::optional<ImportanceVector> importance;
  std::vector<std::size_t> feature_mask;
  oversample::SynthesisReport final_synthesis;

  /// CV result of the model that was (or would be) deployed.
  const CvResult& selected() const { return ablated_cv ? *ablated_cv : *full_cv; }
};

/// Oversample -> importance-based ablation -> grid-search CV -> final fit on
/// all rows with the winning hyperparameters. With `fit_final` false the
/// final forest is skipped (used by the sweeps, which only need CV scores).
template <FeatureMatrix M>
TrainResult train_slip_model(const M& X, std::span<const std::uint8_t> y, const TrainOptions& opts,
                             TrainingMetadata meta = {}, bool fit_final = true) {
  opts.cv.grid.validate();
  TrainResult result;
  const std::uint64_t seed = opts.cv.seed;

  std::optional<oversample::BalancedData<M>> all;
  auto balanced_all = [&]() -> oversample::BalancedData<M>& {
    if (!all) {
      auto os = opts.cv.oversample;
      os.svm.seed = derive_seed(seed, 0xA110);
      os.synthesis.seed = derive_seed(seed, 0xA111);
      all.emplace(oversample::balance_classes(X, y, os));
    }
    return *all;
  };

  std::size_t max_depth = 0;
  for (auto d : opts.cv.grid.max_depth) max_depth = std::max(max_depth, d);

  if (opts.ablate) {
    auto& b = balanced_all();
    ForestOptions fo;
    fo.num_trees = opts.importance_trees;
    fo.max_depth = max_depth;
    fo.features_per_split = opts.cv.features_per_split;
    fo.min_samples_split = opts.cv.min_samples_split;
    fo.seed = derive_seed(seed, 0x1A9);
    const auto probe = fit_forest(b.X, b.y, fo, opts.cv.feature_mask);
    result.importance = mdi_importance(probe);
    result.feature_mask = ablate_features(*result.importance, opts.ablation_mass);
  } else {
    result.feature_mask = opts.cv.feature_mask;
  }

  if (!opts.ablate || opts.compare_full) result.full_cv = grid_search_cv(X, y, opts.cv);
  if (opts.ablate) {
    auto cv = opts.cv;
    cv.feature_mask = result.feature_mask;
    result.ablated_cv = grid_search_cv(X, y, cv);
  }

  if (fit_final) {
    const auto& chosen = result.selected();
    auto& b = balanced_all();
    ForestOptions fo;
    fo.num_trees = chosen.best_num_trees;
    fo.max_depth = chosen.best_max_depth;
    fo.features_per_split = opts.cv.features_per_split;
    fo.min_samples_split = opts.cv.min_samples_split;
    fo.seed = derive_seed(seed, 0xF1A1);
    result.model = fit_forest(b.X, b.y, fo, result.feature_mask, meta);
    result.final_synthesis = b.report;
  }
  return result;
}

}  // namespace prepare::forest
