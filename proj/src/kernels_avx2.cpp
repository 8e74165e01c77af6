#include "hovd/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

namespace hovd::kernels {
namespace {

// Each kernel mirrors the scalar reference operation-for-operation: separate
// multiply and add instructions, identical per-element order, scalar handling
// of the loop remainder. That keeps results bitwise equal to the scalar
// backend.

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + a * x[i];
  }
}

void lincomb2_avx2(std::size_t n, double a, const double* x, double b, const double* y,
                   double* out) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    const __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(vx, vy));
  }
  for (; i < n; ++i) {
    out[i] = a * x[i] + b * y[i];
  }
}

void scale_avx2(std::size_t n, double a, double* x) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) {
    x[i] = a * x[i];
  }
}

void syr1_avx2(std::size_t d, const double a, const double* g, double* h) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double agi = a * g[i];
    const __m256d vagi = _mm256_set1_pd(agi);
    const std::size_t row = d - i;
    double* hrow = h + k;
    const double* grow = g + i;
    std::size_t j = 0;
    for (; j + 4 <= row; j += 4) {
      const __m256d vh = _mm256_loadu_pd(hrow + j);
      const __m256d vg = _mm256_loadu_pd(grow + j);
      _mm256_storeu_pd(hrow + j, _mm256_add_pd(vh, _mm256_mul_pd(vagi, vg)));
    }
    for (; j < row; ++j) {
      hrow[j] = hrow[j] + agi * grow[j];
    }
    k += row;
  }
}

void syr2_avx2(std::size_t d, const double a, const double* u, const double* v, double* h) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double aui = a * u[i];
    const double avi = a * v[i];
    const __m256d vaui = _mm256_set1_pd(aui);
    const __m256d vavi = _mm256_set1_pd(avi);
    const std::size_t row = d - i;
    double* hrow = h + k;
    const double* urow = u + i;
    const double* vrow = v + i;
    std::size_t j = 0;
    for (; j + 4 <= row; j += 4) {
      const __m256d vh = _mm256_loadu_pd(hrow + j);
      const __m256d t1 = _mm256_mul_pd(vaui, _mm256_loadu_pd(vrow + j));
      const __m256d t2 = _mm256_mul_pd(vavi, _mm256_loadu_pd(urow + j));
      _mm256_storeu_pd(hrow + j, _mm256_add_pd(vh, _mm256_add_pd(t1, t2)));
    }
    for (; j < row; ++j) {
      hrow[j] = hrow[j] + (aui * vrow[j] + avi * urow[j]);
    }
    k += row;
  }
}

}  // namespace

const Ops* avx2_ops_build() {
  static const Ops ops{axpy_avx2, lincomb2_avx2, scale_avx2, syr1_avx2, syr2_avx2, "avx2"};
  return &ops;
}

}  // namespace hovd::kernels

#endif  // defined(__AVX2__)
