#pragma once

// Data-parallel inner loops used by the kernel and objective code.
//
// Every kernel has a scalar reference implementation and, where the CPU
// supports it, an AVX2 variant selected once at startup. The element-wise
// kernels (weighted_sq_dist, compensated_axpy, compensated_rank1) perform the
// same IEEE operations in the same order in every backend, so their results
// are bitwise identical across backends. Only dot() reassociates.
//
// Set ASYNCGP_SIMD=scalar in the environment to force the reference path.

#include <cstddef>
#include <string_view>

namespace asyncgp::simd {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend b);

/// Backend picked from CPU features and ASYNCGP_SIMD.
Backend active_backend();
bool backend_available(Backend b);
/// Override the active backend (tests, benchmarks). Throws if unavailable.
void set_backend(Backend b);

struct KernelTable {
  // out[j] = sum_c eta[c] * (x[c] - zcols[c * ld + j])^2 for j < count.
  // zcols is column-major: column c holds coordinate c of every point.
  void (*weighted_sq_dist)(const double* x, const double* zcols, std::size_t ld,
                           std::size_t count, std::size_t dim,
                           const double* eta, double* out);
  // Neumaier-compensated sum += alpha * x, element-wise.
  void (*compensated_axpy)(double* sum, double* comp, double alpha,
                           const double* x, std::size_t n);
  // Column-major rows x cols accumulator: acc(i,j) += alpha * a[i] * b[j],
  // compensated element-wise.
  void (*compensated_rank1)(double* sum, double* comp, std::size_t rows,
                            std::size_t cols, double alpha, const double* a,
                            const double* b);
  double (*dot)(const double* a, const double* b, std::size_t n);
};

const KernelTable& table(Backend b);
inline const KernelTable& active() { return table(active_backend()); }

namespace scalar {
void weighted_sq_dist(const double* x, const double* zcols, std::size_t ld,
                      std::size_t count, std::size_t dim, const double* eta,
                      double* out);
void compensated_axpy(double* sum, double* comp, double alpha, const double* x,
                      std::size_t n);
void compensated_rank1(double* sum, double* comp, std::size_t rows,
                       std::size_t cols, double alpha, const double* a,
                       const double* b);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(ASYNCGP_HAVE_AVX2)
namespace avx2 {
void weighted_sq_dist(const double* x, const double* zcols, std::size_t ld,
                      std::size_t count, std::size_t dim, const double* eta,
                      double* out);
void compensated_axpy(double* sum, double* comp, double alpha, const double* x,
                      std::size_t n);
void compensated_rank1(double* sum, double* comp, std::size_t rows,
                       std::size_t cols, double alpha, const double* a,
                       const double* b);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

}  // namespace asyncgp::simd
