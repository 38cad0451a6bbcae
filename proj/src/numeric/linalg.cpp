#include "relpool/numeric/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "relpool/errors.hpp"

namespace relpool {

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("cholesky: matrix not square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "cholesky: non-positive pivot %.3e at %zu", d, j);
      throw NumericError(buf);
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

double log_det_from_cholesky(const Matrix& chol) {
  double s = 0.0;
  for (std::size_t i = 0; i < chol.rows(); ++i) s += std::log(chol(i, i));
  return 2.0 * s;
}

Vector forward_substitute(const Matrix& chol, std::span<const double> b) {
  const std::size_t n = chol.rows();
  if (b.size() != n) throw InvalidArgument("forward_substitute: length mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol(i, k) * y[k];
    y[i] = s / chol(i, i);
  }
  return y;
}

Vector lower_mul(const Matrix& chol, std::span<const double> x) {
  const std::size_t n = chol.rows();
  if (x.size() != n) throw InvalidArgument("lower_mul: length mismatch");
  Vector y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k <= i; ++k) s += chol(i, k) * x[k];
    y[i] = s;
  }
  return y;
}

Matrix add_ridge(const Matrix& a, double eps) {
  Matrix r = a;
  for (std::size_t i = 0; i < std::min(r.rows(), r.cols()); ++i) r(i, i) += eps;
  return r;
}

}  // namespace relpool
