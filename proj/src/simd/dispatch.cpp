#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "asyncgp/simd.hpp"

namespace asyncgp::simd {

namespace {

constexpr KernelTable kScalarTable{
    &scalar::weighted_sq_dist, &scalar::compensated_axpy,
    &scalar::compensated_rank1, &scalar::dot};

#if defined(ASYNCGP_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::weighted_sq_dist,
                                 &avx2::compensated_axpy,
                                 &avx2::compensated_rank1, &avx2::dot};
#endif

Backend detect() {
  if (const char* env = std::getenv("ASYNCGP_SIMD")) {
    if (std::string(env) == "scalar") return Backend::Scalar;
  }
  if (backend_available(Backend::Avx2)) return Backend::Avx2;
  return Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(ASYNCGP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("SIMD backend not available: " +
                             std::string(backend_name(b)));
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
#if defined(ASYNCGP_HAVE_AVX2)
  if (b == Backend::Avx2) return kAvx2Table;
#endif
  (void)b;
  return kScalarTable;
}

}  // namespace asyncgp::simd
