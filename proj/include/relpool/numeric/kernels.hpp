// Dense inner-loop kernels with a scalar reference and SIMD variants.
//
// Every higher-level matrix routine in the library bottoms out in these
// primitives. The active variant is chosen once at startup from CPUID and can
// be pinned with RELPOOL_KERNELS=scalar|avx2 (or select_isa() in tests). All
// variants are required to agree with the scalar reference to within a few
// ulps of the accumulated magnitude; the ordering of partial sums differs, so
// results are not bitwise identical across variants, only across runs.

#pragma once

#include <cstddef>
#include <string_view>

namespace relpool::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * x[i] + beta * y[i]
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  // c[j] = sum_k a[k] * B[k, j] for row-major B (k rows, n cols); c is overwritten.
  void (*vecmat)(const double* a, const double* b, std::size_t k, std::size_t n, double* c);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);
Isa detect_isa();

const KernelTable& active();
/// Pins the dispatched variant. Throws InvalidArgument if unsupported here.
void select_isa(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  active().axpby(alpha, x, beta, y, n);
}
inline void vecmat(const double* a, const double* b, std::size_t k, std::size_t n, double* c) {
  active().vecmat(a, b, k, n, c);
}

}  // namespace relpool::kernels
