// Compiled with -mavx2 and no FMA so that each lane rounds exactly like the
// scalar reference.
#include "asyncgp/simd.hpp"

#include <immintrin.h>

#include <cmath>

namespace asyncgp::simd::avx2 {

namespace {

inline __m256d vabs(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

inline void neumaier(double* s_ptr, double* c_ptr, __m256d y) {
  const __m256d s = _mm256_loadu_pd(s_ptr);
  const __m256d c = _mm256_loadu_pd(c_ptr);
  const __m256d t = _mm256_add_pd(s, y);
  const __m256d s_bigger = _mm256_cmp_pd(vabs(s), vabs(y), _CMP_GE_OQ);
  const __m256d big = _mm256_blendv_pd(y, s, s_bigger);
  const __m256d small = _mm256_blendv_pd(s, y, s_bigger);
  const __m256d corr = _mm256_add_pd(_mm256_sub_pd(big, t), small);
  _mm256_storeu_pd(c_ptr, _mm256_add_pd(c, corr));
  _mm256_storeu_pd(s_ptr, t);
}

inline void neumaier_tail(double& s, double& c, double y) {
  const double t = s + y;
  const double big = std::fabs(s) >= std::fabs(y) ? s : y;
  const double small = std::fabs(s) >= std::fabs(y) ? y : s;
  c = c + ((big - t) + small);
  s = t;
}

}  // namespace

void weighted_sq_dist(const double* x, const double* zcols, std::size_t ld,
                      std::size_t count, std::size_t dim, const double* eta,
                      double* out) {
  std::size_t j = 0;
  for (; j + 4 <= count; j += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t c = 0; c < dim; ++c) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(x[c]),
                                         _mm256_loadu_pd(zcols + c * ld + j));
      const __m256d sq = _mm256_mul_pd(diff, diff);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(eta[c]), sq));
    }
    _mm256_storeu_pd(out + j, acc);
  }
  for (; j < count; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = x[c] - zcols[c * ld + j];
      const double sq = diff * diff;
      acc = acc + eta[c] * sq;
    }
    out[j] = acc;
  }
}

void compensated_axpy(double* sum, double* comp, double alpha, const double* x,
                      std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    neumaier(sum + i, comp + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) neumaier_tail(sum[i], comp[i], alpha * x[i]);
}

void compensated_rank1(double* sum, double* comp, std::size_t rows,
                       std::size_t cols, double alpha, const double* a,
                       const double* b) {
  for (std::size_t j = 0; j < cols; ++j) {
    const double bj = alpha * b[j];
    const __m256d vb = _mm256_set1_pd(bj);
    double* s = sum + j * rows;
    double* c = comp + j * rows;
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4)
      neumaier(s + i, c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vb));
    for (; i < rows; ++i) neumaier_tail(s[i], c[i], a[i] * bj);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(
        acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4),
                                             _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(
        acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

}  // namespace asyncgp::simd::avx2
