#pragma once

#include <span>

#include "relpool/numeric/matrix.hpp"

namespace relpool {

/// Lower-triangular L with L L^T = a. Throws NumericError if a is not
/// (numerically) positive definite.
Matrix cholesky(const Matrix& a);

/// log det(a) from its Cholesky factor.
double log_det_from_cholesky(const Matrix& chol);

/// Solves L y = b for lower-triangular L.
Vector forward_substitute(const Matrix& chol, std::span<const double> b);

/// y = L x for lower-triangular L.
Vector lower_mul(const Matrix& chol, std::span<const double> x);

/// a + eps * I
Matrix add_ridge(const Matrix& a, double eps);

}  // namespace relpool
