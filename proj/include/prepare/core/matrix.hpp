#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prepare/core/error.hpp"

namespace prepare {

/// Anything that exposes a rows x cols grid of doubles. The learners are
/// written against this so they can run over lazily addressed windows and
/// synthetic rows without materializing a dense copy.
template <class M>
concept FeatureMatrix = requires(const M& m, std::size_t i, std::size_t j) {
  { m.rows() } -> std::convertible_to<std::size_t>;
  { m.cols() } -> std::convertible_to<std::size_t>;
  { m(i, j) } -> std::convertible_to<double>;
};

template <FeatureMatrix M>
void copy_row(const M& m, std::size_t i, std::span<double> out) {
  if (out.size() != m.cols()) throw ShapeError("row buffer has wrong width");
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = m(i, j);
}

template <FeatureMatrix M>
std::vector<double> row_vector(const M& m, std::size_t i) {
  std::vector<double> out(m.cols());
  copy_row(m, i, out);
  return out;
}

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    DenseMatrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) throw ShapeError("ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
    }
    return m;
  }

  template <FeatureMatrix M>
  static DenseMatrix materialize(const M& src) {
    DenseMatrix m(src.rows(), src.cols());
    for (std::size_t i = 0; i < m.rows_; ++i) copy_row(src, i, m.row(i));
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

  void append_row(std::span<const double> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw ShapeError("appended row has wrong width");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row subset of another matrix (non-owning; the base must outlive the view).
template <FeatureMatrix Base>
class RowView {
 public:
  RowView(const Base& base, std::vector<std::size_t> rows) : base_(&base), rows_(std::move(rows)) {}
  std::size_t rows() const noexcept { return rows_.size(); }
  std::size_t cols() const noexcept { return base_->cols(); }
  double operator()(std::size_t i, std::size_t j) const { return (*base_)(rows_[i], j); }
  std::size_t base_row(std::size_t i) const noexcept { return rows_[i]; }
  const std::vector<std::size_t>& row_map() const noexcept { return rows_; }
  const Base& base() const noexcept { return *base_; }

 private:
  const Base* base_;
  std::vector<std::size_t> rows_;
};

/// Column subset (feature mask) of another matrix (non-owning).
template <FeatureMatrix Base>
class ColumnView {
 public:
  ColumnView(const Base& base, std::vector<std::size_t> cols) : base_(&base), cols_(std::move(cols)) {
    for (auto c : cols_)
      if (c >= base.cols()) throw IndexError("column " + std::to_string(c) + " out of range");
  }
  std::size_t rows() const noexcept { return base_->rows(); }
  std::size_t cols() const noexcept { return cols_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return (*base_)(i, cols_[j]); }
  const std::vector<std::size_t>& column_map() const noexcept { return cols_; }

 private:
  const Base* base_;
  std::vector<std::size_t> cols_;
};

}  // namespace prepare
