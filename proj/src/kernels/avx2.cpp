// Compiled with -mavx2 (and deliberately without -mfma); only reached after
// the dispatcher has confirmed AVX2 support at runtime.

#include <immintrin.h>

#include "slq/kernels.hpp"

namespace slq::kernels::avx2 {

void scale(std::span<double> y, std::span<const double> d) {
  const std::size_t n = y.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y.data() + i);
    __m256d vd = _mm256_loadu_pd(d.data() + i);
    _mm256_storeu_pd(y.data() + i, _mm256_mul_pd(vy, vd));
  }
  for (; i < n; ++i) y[i] *= d[i];
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x.data() + i);
    __m256d vy = _mm256_loadu_pd(y.data() + i);
    _mm256_storeu_pd(y.data() + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x.data() + i),
                                             _mm256_loadu_pd(y.data() + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x.data() + i + 4),
                                             _mm256_loadu_pd(y.data() + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x.data() + i),
                                             _mm256_loadu_pd(y.data() + i)));
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemv_acc(std::span<double> y, const double* a, std::span<const double> x) {
  const std::size_t rows = y.size();
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double* col = a + j * rows;
    const __m256d vx = _mm256_set1_pd(x[j]);
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) {
      __m256d vy = _mm256_loadu_pd(y.data() + i);
      __m256d vc = _mm256_loadu_pd(col + i);
      _mm256_storeu_pd(y.data() + i, _mm256_add_pd(vy, _mm256_mul_pd(vc, vx)));
    }
    for (; i < rows; ++i) y[i] += col[i] * x[j];
  }
}

void conjugate_diagonal(std::span<double> m, std::span<const double> d) {
  const std::size_t n = d.size();
  for (std::size_t j = 0; j < n; ++j) {
    double* col = m.data() + j * n;
    const __m256d vdj = _mm256_set1_pd(d[j]);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
      __m256d vm = _mm256_loadu_pd(col + i);
      __m256d vd = _mm256_loadu_pd(d.data() + i);
      _mm256_storeu_pd(col + i, _mm256_mul_pd(vm, _mm256_mul_pd(vd, vdj)));
    }
    for (; i < n; ++i) col[i] = col[i] * (d[i] * d[j]);
  }
}

}  // namespace slq::kernels::avx2
