#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace relpool {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// c += a^T * b, shapes must agree.
void accumulate_tn(const Matrix& a, const Matrix& b, Matrix& c);

Matrix transpose(const Matrix& a);
/// Stacks a above b (column counts must match; either may have zero rows).
Matrix vstack(const Matrix& a, const Matrix& b);
/// Rows [begin, begin + count) as a new matrix.
Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count);
/// Columns [begin, begin + count) as a new matrix.
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);

void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

/// y = x * M for row vector x (length M.rows()).
Vector vecmat(std::span<const double> x, const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace relpool
