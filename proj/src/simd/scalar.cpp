#include "asyncgp/simd.hpp"

#include <cmath>

namespace asyncgp::simd::scalar {

void weighted_sq_dist(const double* x, const double* zcols, std::size_t ld,
                      std::size_t count, std::size_t dim, const double* eta,
                      double* out) {
  for (std::size_t j = 0; j < count; ++j) out[j] = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double xc = x[c];
    const double w = eta[c];
    const double* col = zcols + c * ld;
    for (std::size_t j = 0; j < count; ++j) {
      const double diff = xc - col[j];
      const double sq = diff * diff;
      out[j] = out[j] + w * sq;
    }
  }
}

namespace {

// One Neumaier step. Kept branch-free in the same shape as the vector code.
inline void neumaier(double& s, double& c, double y) {
  const double t = s + y;
  const double big = std::fabs(s) >= std::fabs(y) ? s : y;
  const double small = std::fabs(s) >= std::fabs(y) ? y : s;
  c = c + ((big - t) + small);
  s = t;
}

}  // namespace

void compensated_axpy(double* sum, double* comp, double alpha, const double* x,
                      std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) neumaier(sum[i], comp[i], alpha * x[i]);
}

void compensated_rank1(double* sum, double* comp, std::size_t rows,
                       std::size_t cols, double alpha, const double* a,
                       const double* b) {
  for (std::size_t j = 0; j < cols; ++j) {
    const double bj = alpha * b[j];
    double* s = sum + j * rows;
    double* c = comp + j * rows;
    for (std::size_t i = 0; i < rows; ++i) neumaier(s[i], c[i], a[i] * bj);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace asyncgp::simd::scalar
