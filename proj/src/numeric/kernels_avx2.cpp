// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may be called unless cpu_supports(kAvx2).

#include "relpool/numeric/kernels.hpp"

#if defined(RELPOOL_HAVE_AVX2)
#include <immintrin.h>

namespace relpool::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_avx2(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), by));
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void vecmat_avx2(const double* a, const double* b, std::size_t k, std::size_t n, double* c) {
  std::size_t j = 0;
  // Four output lanes x4 registers at a time keeps the accumulators in registers.
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
    __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
    for (std::size_t r = 0; r < k; ++r) {
      const __m256d ar = _mm256_set1_pd(a[r]);
      const double* brow = b + r * n + j;
      c0 = _mm256_fmadd_pd(ar, _mm256_loadu_pd(brow), c0);
      c1 = _mm256_fmadd_pd(ar, _mm256_loadu_pd(brow + 4), c1);
      c2 = _mm256_fmadd_pd(ar, _mm256_loadu_pd(brow + 8), c2);
      c3 = _mm256_fmadd_pd(ar, _mm256_loadu_pd(brow + 12), c3);
    }
    _mm256_storeu_pd(c + j, c0);
    _mm256_storeu_pd(c + j + 4, c1);
    _mm256_storeu_pd(c + j + 8, c2);
    _mm256_storeu_pd(c + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_setzero_pd();
    for (std::size_t r = 0; r < k; ++r) {
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[r]), _mm256_loadu_pd(b + r * n + j), c0);
    }
    _mm256_storeu_pd(c + j, c0);
  }
  for (; j < n; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < k; ++r) s += a[r] * b[r * n + j];
    c[j] = s;
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::kAvx2, "avx2", &dot_avx2, &axpy_avx2, &axpby_avx2,
                                 &vecmat_avx2};
  return &table;
}

}  // namespace relpool::kernels

#else

namespace relpool::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace relpool::kernels

#endif
