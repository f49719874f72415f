#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"
#include "prepare/core/text.hpp"
#include "prepare/oversample/linear_svm.hpp"

namespace prepare::oversample {

enum class SynthesisMode : std::uint8_t { interpolation, extrapolation };

inline std::string_view to_string(SynthesisMode m) {
  return m == SynthesisMode::interpolation ? "interpolation" : "extrapolation";
}

/// How one synthetic row was made: x = x_sv + c * (x_nb - x_sv) with
/// c = delta for interpolation and c = -delta for extrapolation.
struct Provenance {
  std::size_t sv_index = 0;
  std::size_t neighbor_index = 0;
  double delta = 0.0;
  SynthesisMode mode = SynthesisMode::interpolation;

  double coefficient() const noexcept { return mode == SynthesisMode::interpolation ? delta : -delta; }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SynthesisReport {
  std::vector<Provenance> generated;
  std::size_t final_minority_count = 0;
  std::size_t final_majority_count = 0;
  std::uint8_t minority_label = 1;

  std::string to_csv() const {
    std::string out = "sv_index,neighbor_index,delta,mode\n";
    for (const auto& g : generated)
      out += std::to_string(g.sv_index) + ',' + std::to_string(g.neighbor_index) + ',' + text::format_double(g.delta) +
             ',' + std::string(to_string(g.mode)) + '\n';
    return out;
  }
};

/// Original rows followed by synthetic rows that are evaluated on demand from
/// their two parents. Non-owning with respect to the base matrix.
template <FeatureMatrix Base>
class AugmentedMatrix {
 public:
  AugmentedMatrix(const Base& base, std::vector<Provenance> synthetic)
      : base_(&base), synthetic_(std::move(synthetic)) {}

  std::size_t rows() const noexcept { return base_->rows() + synthetic_.size(); }
  std::size_t cols() const noexcept { return base_->cols(); }
  std::size_t original_rows() const noexcept { return base_->rows(); }
  bool is_synthetic(std::size_t i) const noexcept { return i >= base_->rows(); }

  double operator()(std::size_t i, std::size_t j) const {
    const std::size_t n = base_->rows();
    if (i < n) return (*base_)(i, j);
    const auto& p = synthetic_[i - n];
    const double a = (*base_)(p.sv_index, j);
    const double b = (*base_)(p.neighbor_index, j);
    return a + p.coefficient() * (b - a);
  }

  const Base& base() const noexcept { return *base_; }
  const std::vector<Provenance>& synthetic() const noexcept { return synthetic_; }

 private:
  const Base* base_;
  std::vector<Provenance> synthetic_;
};

template <FeatureMatrix Base>
struct BalancedData {
  AugmentedMatrix<Base> X;
  std::vector<std::uint8_t> y;
  SynthesisReport report;
};

struct SynthesisOptions {
  std::size_t k_neighbors = 5;
  std::uint64_t seed = 0;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  const std::size_t n = a.size();
  for (; j + 4 <= n; j += 4) {
    const double d0 = a[j] - b[j], d1 = a[j + 1] - b[j + 1], d2 = a[j + 2] - b[j + 2], d3 = a[j + 3] - b[j + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; j < n; ++j) {
    const double d = a[j] - b[j];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

/// squared_distance, or +inf as soon as a partial sum exceeds `limit`.
/// Summation order is the same, so a finished result is bit-identical.
inline double bounded_squared_distance(std::span<const double> a, std::span<const double> b, double limit) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  const std::size_t n = a.size();
  while (j + 4 <= n) {
    const std::size_t stop = std::min(n - n % 4, j + 64);
    for (; j < stop; j += 4) {
      const double d0 = a[j] - b[j], d1 = a[j + 1] - b[j + 1], d2 = a[j + 2] - b[j + 2], d3 = a[j + 3] - b[j + 3];
      s0 += d0 * d0;
      s1 += d1 * d1;
      s2 += d2 * d2;
      s3 += d3 * d3;
    }
    if ((s0 + s1) + (s2 + s3) > limit) return std::numeric_limits<double>::infinity();
  }
  for (; j < n; ++j) {
    const double d = a[j] - b[j];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

struct Neighborhood {
  std::size_t majority_among_k = 0;
  std::vector<std::size_t> minority_neighbors;  // nearest first
};

using Ranked = std::pair<double, std::size_t>;

/// Keeps the k smallest (distance, index) pairs, sorted.
inline void offer(std::vector<Ranked>& best, std::size_t k, Ranked e) {
  if (best.size() == k && !(e < best.back())) return;
  best.insert(std::upper_bound(best.begin(), best.end(), e), e);
  if (best.size() > k) best.pop_back();
}

inline double worst(const std::vector<Ranked>& best, std::size_t k) {
  return best.size() < k ? std::numeric_limits<double>::infinity() : best.back().first;
}

/// k nearest rows of `query` in Z (self excluded, ties by index), and its
/// k nearest minority rows.
inline Neighborhood neighborhood(const DenseMatrix& Z, std::span<const std::uint8_t> y, std::uint8_t minority,
                                 std::size_t query, std::size_t k) {
  std::vector<Ranked> all, mins;
  const auto q = Z.row(query);
  for (std::size_t r = 0; r < Z.rows(); ++r) {
    if (r == query) continue;
    const bool is_min = y[r] == minority;
    const double limit = is_min ? worst(mins, k) : worst(all, k);
    const double d = bounded_squared_distance(q, Z.row(r), limit);
    if (d > limit) continue;
    offer(all, k, {d, r});
    if (is_min) offer(mins, k, {d, r});
  }
  Neighborhood nb;
  for (const auto& e : all) nb.majority_among_k += y[e.second] != minority ? 1 : 0;
  for (const auto& e : mins) nb.minority_neighbors.push_back(e.second);
  return nb;
}

}  // namespace detail

/// Borderline minority synthesis over the support vectors of `model`, with
/// neighbour search in the distance space `Z` (rows aligned with X).
/// Support vectors are visited round-robin; each one's mode is set by its k
/// nearest neighbours: at least half majority -> interpolate towards a random
/// nearby minority point (delta ~ U[0,1]), otherwise extrapolate away from it
/// (delta ~ U[0,0.5]). Stops when both classes have equal counts.
template <FeatureMatrix M>
BalancedData<M> synthesize_minority_in(const M& X, const DenseMatrix& Z, std::span<const std::uint8_t> y,
                                       const LinearSvmModel& model, const SynthesisOptions& opts) {
  const std::size_t n = X.rows();
  if (y.size() != n || Z.rows() != n) throw ShapeError("samples, distance space and labels disagree in length");
  std::size_t positives = 0;
  for (auto v : y) positives += v ? 1 : 0;
  const std::size_t negatives = n - positives;
  const std::uint8_t minority = positives <= negatives ? 1 : 0;
  const std::size_t minority_count = std::min(positives, negatives);
  const std::size_t majority_count = std::max(positives, negatives);

  BalancedData<M> out{AugmentedMatrix<M>(X, {}), std::vector<std::uint8_t>(y.begin(), y.end()), {}};
  out.report.minority_label = minority;
  out.report.final_minority_count = minority_count;
  out.report.final_majority_count = majority_count;
  if (minority_count == majority_count) return out;
  if (minority_count < 2) throw TooFewMinority("need at least 2 minority samples, have " + std::to_string(minority_count));
  if (opts.k_neighbors == 0 || opts.k_neighbors >= n)
    throw InvalidConfig("k_neighbors must be in [1, sample count)");

  std::vector<std::size_t> seeds;
  for (auto i : model.support_indices) {
    if (i >= n) throw IndexError("support index beyond training set");
    if (y[i] == minority) seeds.push_back(i);
  }
  // No minority sample on the margin: every minority sample is borderline.
  if (seeds.empty())
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] == minority) seeds.push_back(i);

  std::vector<std::optional<detail::Neighborhood>> cache(seeds.size());
  std::vector<Provenance> synthetic;
  synthetic.reserve(majority_count - minority_count);
  Rng rng(opts.seed);
  for (std::size_t g = 0; minority_count + g < majority_count; ++g) {
    const std::size_t s = g % seeds.size();
    if (!cache[s]) cache[s] = detail::neighborhood(Z, y, minority, seeds[s], opts.k_neighbors);
    const auto& nb = *cache[s];
    Provenance p;
    p.sv_index = seeds[s];
    p.neighbor_index = nb.minority_neighbors[uniform_index(rng, nb.minority_neighbors.size())];
    if (2 * nb.majority_among_k >= opts.k_neighbors) {
      p.mode = SynthesisMode::interpolation;
      p.delta = uniform01(rng);
    } else {
      p.mode = SynthesisMode::extrapolation;
      p.delta = 0.5 * uniform01(rng);
    }
    synthetic.push_back(p);
  }
  out.y.resize(n + synthetic.size(), minority);
  out.report.generated = synthetic;
  out.report.final_minority_count = minority_count + synthetic.size();
  out.X = AugmentedMatrix<M>(X, std::move(synthetic));
  return out;
}

/// Same as synthesize_minority_in with distances measured after z-scoring X.
template <FeatureMatrix M>
BalancedData<M> synthesize_minority(const M& X, std::span<const std::uint8_t> y, const LinearSvmModel& model,
                                    const SynthesisOptions& opts) {
  const auto Z = Standardizer::fit(X).transform(X);
  return synthesize_minority_in(X, Z, y, model, opts);
}

struct OversampleOptions {
  bool enabled = true;
  SvmOptions svm{};
  SynthesisOptions synthesis{};
};

/// Standardise, fit the borderline SVM, synthesise minority rows until the
/// classes are balanced. Already balanced data passes through untouched.
template <FeatureMatrix M>
BalancedData<M> balance_classes(const M& X, std::span<const std::uint8_t> y, const OversampleOptions& opts) {
  std::size_t positives = 0;
  for (auto v : y) positives += v ? 1 : 0;
  if (!opts.enabled || 2 * positives == y.size()) {
    BalancedData<M> out{AugmentedMatrix<M>(X, {}), std::vector<std::uint8_t>(y.begin(), y.end()), {}};
    out.report.minority_label = positives * 2 <= y.size() ? 1 : 0;
    out.report.final_minority_count = std::min(positives, y.size() - positives);
    out.report.final_majority_count = std::max(positives, y.size() - positives);
    return out;
  }
  const auto Z = Standardizer::fit(X).transform(X);
  const auto model = fit_linear_svm(Z, y, opts.svm);
  return synthesize_minority_in(X, Z, y, model, opts.synthesis);
}

}  // namespace prepare::oversample
