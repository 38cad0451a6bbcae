#include "relpool/numeric/kernels.hpp"

namespace relpool::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_scalar(double alpha, const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void vecmat_scalar(const double* a, const double* b, std::size_t k, std::size_t n, double* c) {
  for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const double ar = a[r];
    const double* brow = b + r * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += ar * brow[j];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar, "scalar", &dot_scalar, &axpy_scalar, &axpby_scalar,
                                 &vecmat_scalar};
  return table;
}

}  // namespace relpool::kernels
