#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"

namespace prepare::oversample {

inline constexpr double kSupportTolerance = 1e-3;

struct LinearSvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<std::size_t> support_indices;  // samples with y*f(x) <= 1 + tol
  double C = 1.0;

  double decision(std::span<const double> x) const {
    if (x.size() != weights.size()) throw ShapeError("SVM input has wrong dimension");
    double s = bias;
    for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
    return s;
  }
};

struct SvmOptions {
  double C = 1.0;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
};

namespace detail {
template <FeatureMatrix M>
double dot_row(const M& X, std::size_t i, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * X(i, j);
  return s;
}
}  // namespace detail

/// Hinge-loss linear SVM trained by stochastic sub-gradient descent (Pegasos)
/// with step 1/(lambda t), lambda = 1/(C n). The bias is carried as an extra
/// weight on a constant input. The iterate is projected onto the ball of
/// radius 1/sqrt(lambda) after every step.
template <FeatureMatrix M>
LinearSvmModel fit_linear_svm(const M& X, std::span<const std::uint8_t> y, const SvmOptions& opts) {
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  if (y.size() != n) throw ShapeError("label count does not match sample count");
  if (!(opts.C > 0.0)) throw InvalidConfig("C must be positive");
  std::size_t positives = 0;
  for (auto v : y) positives += v ? 1 : 0;
  if (positives == 0 || positives == n) throw DegenerateLabels("SVM needs both classes present");

  const double lambda = 1.0 / (opts.C * static_cast<double>(n));
  const double radius_sq = 1.0 / lambda;
  // w = scale * v, with v[d] the bias weight.
  std::vector<double> v(d + 1, 0.0);
  double scale = 1.0;
  double v_norm_sq = 0.0;
  Rng rng(opts.seed);
  const std::size_t iterations = std::max<std::size_t>(1, opts.epochs) * n;
  for (std::size_t t = 1; t <= iterations; ++t) {
    const std::size_t i = uniform_index(rng, n);
    const double yi = y[i] ? 1.0 : -1.0;
    double vx = v[d];
    double xx = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xij = X(i, j);
      vx += v[j] * xij;
      xx += xij * xij;
    }
    const double margin = yi * scale * vx;
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    scale *= 1.0 - eta * lambda;
    if (scale <= 0.0) {
      std::fill(v.begin(), v.end(), 0.0);
      scale = 1.0;
      v_norm_sq = 0.0;
      vx = 0.0;
    }
    if (margin < 1.0) {
      const double a = eta * yi / scale;
      for (std::size_t j = 0; j < d; ++j) v[j] += a * X(i, j);
      v[d] += a;
      v_norm_sq += 2.0 * a * vx + a * a * xx;
    }
    const double w_norm_sq = scale * scale * v_norm_sq;
    if (w_norm_sq > radius_sq) scale *= std::sqrt(radius_sq / w_norm_sq);
    if (scale < 1e-100) {
      for (auto& e : v) e *= scale;
      v_norm_sq *= scale * scale;
      scale = 1.0;
    }
  }

  LinearSvmModel model;
  model.C = opts.C;
  model.weights.resize(d);
  for (std::size_t j = 0; j < d; ++j) model.weights[j] = scale * v[j];
  model.bias = scale * v[d];
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = y[i] ? 1.0 : -1.0;
    const double f = detail::dot_row(X, i, model.weights) + model.bias;
    if (yi * f <= 1.0 + kSupportTolerance) model.support_indices.push_back(i);
  }
  return model;
}

/// Per-feature z-scoring with statistics taken from the training rows only.
class Standardizer {
 public:
  Standardizer() = default;

  template <FeatureMatrix M>
  static Standardizer fit(const M& X) {
    Standardizer s;
    const std::size_t n = X.rows(), d = X.cols();
    s.mean_.assign(d, 0.0);
    s.scale_.assign(d, 1.0);
    if (n == 0) return s;
    std::vector<double> m2(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double inv = 1.0 / static_cast<double>(i + 1);
      for (std::size_t j = 0; j < d; ++j) {
        const double x = X(i, j);
        const double delta = x - s.mean_[j];
        s.mean_[j] += delta * inv;
        m2[j] += delta * (x - s.mean_[j]);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(m2[j] / static_cast<double>(n));
      s.scale_[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  template <FeatureMatrix M>
  DenseMatrix transform(const M& X) const {
    if (X.cols() != mean_.size()) throw ShapeError("standardizer width mismatch");
    DenseMatrix Z(X.rows(), X.cols());
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t j = 0; j < X.cols(); ++j) Z(i, j) = (X(i, j) - mean_[j]) / scale_[j];
    return Z;
  }

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& scale() const noexcept { return scale_; }

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace prepare::oversample
