#include "relpool/numeric/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/numeric/kernels.hpp"

namespace relpool {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("matrix data length " + std::to_string(data_.size()) +
                          " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == cols, "from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    k.vecmat(a.row(i).data(), b.data(), b.rows(), b.cols(), c.row(i).data());
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix c(a.rows(), b.rows());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      c(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  accumulate_tn(a, b, c);
  return c;
}

void accumulate_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  require(c.rows() == a.cols() && c.cols() == b.cols(), "accumulate_tn: output shape mismatch");
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double air = a(r, i);
      if (air != 0.0) k.axpy(air, brow, c.row(i).data(), b.cols());
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  require(a.cols() == b.cols(), "vstack: column mismatch");
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.flat().begin(), a.flat().end());
  data.insert(data.end(), b.flat().begin(), b.flat().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.rows(), "slice_rows: out of range");
  Matrix s(count, a.cols());
  std::copy_n(a.data() + begin * a.cols(), count * a.cols(), s.data());
  return s;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.cols(), "slice_cols: out of range");
  Matrix s(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.row(i).data() + begin, count, s.row(i).data());
  return s;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add_inplace: shape mismatch");
  kernels::axpy(1.0, b.data(), a.data(), a.size());
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.flat()) v *= s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  return max_abs_diff(a.flat(), b.flat());
}

double frobenius_norm(const Matrix& a) { return norm2(a.flat()); }

Vector vecmat(std::span<const double> x, const Matrix& m) {
  require(x.size() == m.rows(), "vecmat: length mismatch");
  Vector y(m.cols());
  kernels::vecmat(x.data(), m.data(), m.rows(), m.cols(), y.data());
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  return kernels::dot(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> a) { return std::sqrt(kernels::dot(a.data(), a.data(), a.size())); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace relpool
