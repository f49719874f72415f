#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prepare/core/error.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"
#include "prepare/core/text.hpp"
#include "prepare/forest/tree.hpp"

namespace prepare::forest {

/// Per-node feature subset size. `sqrt` resolves to floor(sqrt(#features)),
/// `all` scans every feature as in the plain algorithm.
struct FeaturesPerSplit {
  enum class Mode : std::uint8_t { sqrt, all, fixed } mode = Mode::sqrt;
  std::size_t count = 0;

  static FeaturesPerSplit sqrt_rule() { return {Mode::sqrt, 0}; }
  static FeaturesPerSplit all() { return {Mode::all, 0}; }
  static FeaturesPerSplit fixed(std::size_t n) { return {Mode::fixed, n}; }

  std::size_t resolve(std::size_t num_features) const {
    switch (mode) {
      case Mode::all: return num_features;
      case Mode::fixed: return std::clamp<std::size_t>(count, 1, num_features);
      case Mode::sqrt: break;
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(num_features)))));
  }

  std::string to_string() const {
    switch (mode) {
      case Mode::all: return "all";
      case Mode::fixed: return std::to_string(count);
      case Mode::sqrt: break;
    }
    return "sqrt";
  }

  static FeaturesPerSplit parse(const std::string& s) {
    if (s == "sqrt") return sqrt_rule();
    if (s == "all") return all();
    std::size_t n = 0;
    if (!text::parse_int(s, n) || n == 0) throw InvalidConfig("features_per_split must be sqrt, all or a positive count");
    return fixed(n);
  }
};

struct ForestOptions {
  std::size_t num_trees = 100;
  std::size_t max_depth = 10;
  FeaturesPerSplit features_per_split{};
  std::size_t min_samples_split = 2;
  std::uint64_t seed = 0;
};

/// Provenance carried with a trained model so deployment can check that the
/// incoming windows match what it was trained on.
struct TrainingMetadata {
  std::size_t k_samples = 0;
  std::size_t lookahead_n = 0;
  double sample_period = 0.0;
};

class SlipForest {
 public:
  SlipForest() = default;
  SlipForest(std::vector<DecisionTree> trees, std::vector<std::uint64_t> tree_seeds, std::size_t input_dim,
             ForestOptions opts, std::vector<std::size_t> feature_mask = {}, TrainingMetadata meta = {})
      : trees_(std::move(trees)),
        tree_seeds_(std::move(tree_seeds)),
        input_dim_(input_dim),
        opts_(opts),
        mask_(std::move(feature_mask)),
        meta_(meta) {
    if (trees_.empty()) throw InvalidConfig("forest needs at least one tree");
    for (const auto& t : trees_)
      for (const auto& n : t.nodes())
        if (!n.is_leaf() && static_cast<std::size_t>(n.feature) >= input_dim_)
          throw ShapeError("tree splits on feature beyond input dimension");
  }

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const std::vector<std::uint64_t>& tree_seeds() const noexcept { return tree_seeds_; }
  std::size_t num_trees() const noexcept { return trees_.size(); }
  std::size_t input_dim() const noexcept { return input_dim_; }
  const ForestOptions& options() const noexcept { return opts_; }
  /// Original feature indices the forest may split on; empty means all.
  const std::vector<std::size_t>& feature_mask() const noexcept { return mask_; }
  const TrainingMetadata& metadata() const noexcept { return meta_; }
  void set_metadata(TrainingMetadata m) noexcept { meta_ = m; }

  /// Mean of the per-tree leaf slip fractions, using the first `num_trees`
  /// trees with nodes at `depth_limit` treated as leaves. The limits give
  /// the exact predictions of a smaller forest grown with the same seed.
  double predict_proba(std::span<const double> x, std::size_t num_trees = SIZE_MAX,
                       std::size_t depth_limit = SIZE_MAX) const {
    if (x.size() != input_dim_)
      throw ShapeError("feature vector has " + std::to_string(x.size()) + " entries, forest expects " +
                       std::to_string(input_dim_));
    const std::size_t p = std::min(num_trees, trees_.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < p; ++t) sum += trees_[t].predict(x, depth_limit);
    return sum / static_cast<double>(p);
  }

  /// predict_proba for every (tree count, depth limit) pair at once; both
  /// lists ascending, out[a * depths.size() + b] matches
  /// predict_proba(x, tree_counts[a], depths[b]) bit for bit.
  void predict_grid(std::span<const double> x, std::span<const std::size_t> tree_counts,
                    std::span<const std::size_t> depths, std::span<double> out) const {
    if (x.size() != input_dim_) throw ShapeError("feature vector has wrong dimension");
    if (out.size() != tree_counts.size() * depths.size()) throw ShapeError("grid output has wrong size");
    if (tree_counts.empty() || depths.empty()) return;
    if (tree_counts.back() > trees_.size()) throw InvalidConfig("grid asks for more trees than the forest has");
    std::vector<double> sums(depths.size(), 0.0), leaf(depths.size());
    std::size_t a = 0;
    for (std::size_t t = 0; t < tree_counts.back(); ++t) {
      trees_[t].predict_at_depths(x, depths, leaf);
      for (std::size_t b = 0; b < depths.size(); ++b) sums[b] += leaf[b];
      while (a < tree_counts.size() && tree_counts[a] == t + 1) {
        for (std::size_t b = 0; b < depths.size(); ++b)
          out[a * depths.size() + b] = sums[b] / static_cast<double>(t + 1);
        ++a;
      }
    }
  }

  /// Forest equal to one grown with fewer trees and/or a smaller depth limit.
  SlipForest truncated(std::size_t num_trees, std::size_t max_depth) const {
    if (num_trees == 0 || num_trees > trees_.size()) throw InvalidConfig("cannot truncate to that many trees");
    if (max_depth > opts_.max_depth) throw InvalidConfig("cannot deepen a forest by truncation");
    std::vector<DecisionTree> trees;
    for (std::size_t t = 0; t < num_trees; ++t) trees.push_back(trees_[t].truncated(max_depth));
    auto opts = opts_;
    opts.num_trees = num_trees;
    opts.max_depth = max_depth;
    return SlipForest(std::move(trees), {tree_seeds_.begin(), tree_seeds_.begin() + static_cast<std::ptrdiff_t>(num_trees)},
                      input_dim_, opts, mask_, meta_);
  }

  /// Versioned JSON document. Internal nodes are [feature, threshold, left,
  /// right, n_no_slip, n_slip]; leaves are [n_no_slip, n_slip].
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "prepare.slip_forest";
    j["version"] = 1;
    j["hyperparameters"] = {{"num_trees", opts_.num_trees},
                            {"max_depth", opts_.max_depth},
                            {"features_per_split", opts_.features_per_split.to_string()},
                            {"min_samples_split", opts_.min_samples_split},
                            {"seed", opts_.seed}};
    j["input_dim"] = input_dim_;
    j["feature_mask"] = mask_;
    j["metadata"] = {{"k_samples", meta_.k_samples},
                     {"lookahead_n", meta_.lookahead_n},
                     {"sample_period", meta_.sample_period}};
    j["tree_seeds"] = tree_seeds_;
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : trees_) {
      auto nodes = nlohmann::ordered_json::array();
      for (const auto& n : t.nodes()) {
        if (n.is_leaf()) nodes.push_back({n.counts[0], n.counts[1]});
        else nodes.push_back({n.feature, n.threshold, n.left, n.right, n.counts[0], n.counts[1]});
      }
      trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
  }

  std::string serialize() const { return to_json().dump() + "\n"; }

  static SlipForest from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "prepare.slip_forest") throw SchemaMismatch("not a slip forest document");
      if (j.at("version").get<int>() != 1) throw SchemaMismatch("unsupported slip forest version");
      const auto& h = j.at("hyperparameters");
      ForestOptions opts;
      opts.num_trees = h.at("num_trees").get<std::size_t>();
      opts.max_depth = h.at("max_depth").get<std::size_t>();
      opts.features_per_split = FeaturesPerSplit::parse(h.at("features_per_split").get<std::string>());
      opts.min_samples_split = h.at("min_samples_split").get<std::size_t>();
      opts.seed = h.at("seed").get<std::uint64_t>();
      TrainingMetadata meta;
      meta.k_samples = j.at("metadata").at("k_samples").get<std::size_t>();
      meta.lookahead_n = j.at("metadata").at("lookahead_n").get<std::size_t>();
      meta.sample_period = j.at("metadata").at("sample_period").get<double>();
      std::vector<DecisionTree> trees;
      for (const auto& jt : j.at("trees")) {
        std::vector<TreeNode> nodes(jt.size());
        for (std::size_t i = 0; i < jt.size(); ++i) {
          const auto& a = jt[i];
          auto& n = nodes[i];
          if (a.size() == 2) {
            n.counts = {a[0].get<std::uint32_t>(), a[1].get<std::uint32_t>()};
          } else if (a.size() == 6) {
            n.feature = a[0].get<std::int32_t>();
            n.threshold = a[1].get<double>();
            n.left = a[2].get<std::int32_t>();
            n.right = a[3].get<std::int32_t>();
            n.counts = {a[4].get<std::uint32_t>(), a[5].get<std::uint32_t>()};
            if (n.feature < 0 || n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
                static_cast<std::size_t>(n.left) >= jt.size() || static_cast<std::size_t>(n.right) >= jt.size())
              throw SchemaMismatch("malformed internal node");
            nodes[static_cast<std::size_t>(n.left)].depth = static_cast<std::uint16_t>(n.depth + 1);
            nodes[static_cast<std::size_t>(n.right)].depth = static_cast<std::uint16_t>(n.depth + 1);
          } else {
            throw SchemaMismatch("tree node must have 2 or 6 entries");
          }
          if (n.total() == 0) throw SchemaMismatch("tree node with zero samples");
        }
        trees.emplace_back(std::move(nodes));
      }
      return SlipForest(std::move(trees), j.at("tree_seeds").get<std::vector<std::uint64_t>>(),
                        j.at("input_dim").get<std::size_t>(), opts,
                        j.at("feature_mask").get<std::vector<std::size_t>>(), meta);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch(std::string("model document: ") + e.what());
    }
  }

  static SlipForest deserialize(const std::string& s) {
    try {
      return from_json(nlohmann::json::parse(s));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaMismatch(std::string("model document: ") + e.what());
    }
  }

 private:
  std::vector<DecisionTree> trees_;
  std::vector<std::uint64_t> tree_seeds_;
  std::size_t input_dim_ = 0;
  ForestOptions opts_{};
  std::vector<std::size_t> mask_;
  TrainingMetadata meta_{};
};

/// Bootstrap sample (n draws with replacement) for the tree with this seed.
inline std::vector<std::uint32_t> bootstrap_rows(std::uint64_t tree_seed, std::size_t n) {
  Rng rng(tree_seed);
  std::vector<std::uint32_t> rows(n);
  for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, n));
  return rows;
}

/// Random forest over X restricted to `feature_mask` (empty = all columns).
/// Tree t is seeded with derive_seed(seed, t), so a forest of P trees is the
/// prefix of any larger forest fitted with the same seed.
template <FeatureMatrix M>
SlipForest fit_forest(const M& X, std::span<const std::uint8_t> y, const ForestOptions& opts,
                      std::vector<std::size_t> feature_mask = {}, TrainingMetadata meta = {}) {
  if (y.size() != X.rows()) throw ShapeError("label count does not match sample count");
  if (opts.num_trees == 0) throw InvalidConfig("num_trees must be >= 1");
  if (opts.max_depth == 0) throw InvalidConfig("max_depth must be >= 1");
  if (X.rows() > UINT32_MAX) throw InvalidConfig("too many samples");
  std::size_t positives = 0;
  for (auto v : y) positives += v ? 1 : 0;
  if (positives == 0 || positives == y.size()) throw DegenerateLabels("training labels contain a single class");

  std::vector<std::size_t> pool = feature_mask;
  if (pool.empty()) {
    pool.resize(X.cols());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (pool.back() >= X.cols()) throw IndexError("feature mask entry beyond input dimension");
    feature_mask = pool;
  }
  TreeGrowthOptions growth{opts.max_depth, opts.features_per_split.resolve(pool.size()), opts.min_samples_split};

  std::vector<DecisionTree> trees;
  std::vector<std::uint64_t> seeds;
  trees.reserve(opts.num_trees);
  for (std::size_t t = 0; t < opts.num_trees; ++t) {
    const auto seed = derive_seed(opts.seed, t);
    detail::TreeBuilder<M> builder(X, y, pool, growth, seed);
    trees.push_back(builder.build(bootstrap_rows(seed, X.rows())));
    seeds.push_back(seed);
  }
  return SlipForest(std::move(trees), std::move(seeds), X.cols(), opts, std::move(feature_mask), meta);
}

inline double predict_proba(const SlipForest& forest, std::span<const double> x) { return forest.predict_proba(x); }

}  // namespace prepare::forest
