#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "asyncgp/simd.hpp"

using namespace asyncgp;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng,
                                  double lo = -3.0, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<simd::Backend> vector_backends() {
  std::vector<simd::Backend> out;
  if (simd::backend_available(simd::Backend::Avx2)) out.push_back(simd::Backend::Avx2);
  return out;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(simd::backend_available(simd::Backend::Scalar));
  CHECK(simd::backend_name(simd::Backend::Scalar) == "scalar");
}

TEST_CASE("weighted_sq_dist matches a direct loop") {
  std::mt19937_64 rng(1);
  const std::size_t dim = 3, count = 7, ld = 9;
  auto x = random_vector(dim, rng);
  auto z = random_vector(ld * dim, rng);
  auto eta = random_vector(dim, rng, 0.1, 2.0);
  std::vector<double> out(count);
  simd::scalar::weighted_sq_dist(x.data(), z.data(), ld, count, dim, eta.data(),
                                 out.data());
  for (std::size_t j = 0; j < count; ++j) {
    double want = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = x[c] - z[c * ld + j];
      want += eta[c] * (diff * diff);
    }
    CHECK(out[j] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("compensated_axpy recovers cancelled low bits") {
  std::vector<double> sum{1e16}, comp{0.0};
  const std::vector<double> one{1.0};
  for (int i = 0; i < 10; ++i)
    simd::scalar::compensated_axpy(sum.data(), comp.data(), 1.0, one.data(), 1);
  CHECK(sum[0] + comp[0] == 1e16 + 10.0);
}

TEST_CASE("vector backends are bitwise equal to scalar on element-wise kernels") {
  const auto backends = vector_backends();
  if (backends.empty()) {
    MESSAGE("no vector backend on this CPU; only the scalar path is tested");
    return;
  }
  std::mt19937_64 rng(7);
  for (const auto b : backends) {
    const auto& t = simd::table(b);
    CAPTURE(simd::backend_name(b));
    // odd sizes exercise the remainder loops
    for (std::size_t count : {1u, 3u, 4u, 5u, 17u, 64u, 67u}) {
      for (std::size_t dim : {1u, 3u, 8u}) {
        const std::size_t ld = count + 2;
        auto x = random_vector(dim, rng);
        auto z = random_vector(ld * dim, rng);
        auto eta = random_vector(dim, rng, 0.01, 3.0);
        std::vector<double> a(count), s(count);
        simd::scalar::weighted_sq_dist(x.data(), z.data(), ld, count, dim,
                                       eta.data(), s.data());
        t.weighted_sq_dist(x.data(), z.data(), ld, count, dim, eta.data(), a.data());
        CHECK(same_bits(a, s));
      }

      auto sum_s = random_vector(count, rng), comp_s = random_vector(count, rng, -1e-16, 1e-16);
      auto sum_v = sum_s, comp_v = comp_s;
      for (int rep = 0; rep < 5; ++rep) {
        auto x = random_vector(count, rng, -1e8, 1e8);
        simd::scalar::compensated_axpy(sum_s.data(), comp_s.data(), 0.37, x.data(), count);
        t.compensated_axpy(sum_v.data(), comp_v.data(), 0.37, x.data(), count);
      }
      CHECK(same_bits(sum_s, sum_v));
      CHECK(same_bits(comp_s, comp_v));

      const std::size_t rows = count, cols = 3;
      std::vector<double> rs(rows * cols, 0.0), rc(rows * cols, 0.0);
      auto vs = rs, vc = rc;
      for (int rep = 0; rep < 4; ++rep) {
        auto av = random_vector(rows, rng), bv = random_vector(cols, rng);
        simd::scalar::compensated_rank1(rs.data(), rc.data(), rows, cols, -1.5,
                                        av.data(), bv.data());
        t.compensated_rank1(vs.data(), vc.data(), rows, cols, -1.5, av.data(),
                            bv.data());
      }
      CHECK(same_bits(rs, vs));
      CHECK(same_bits(rc, vc));

      auto p = random_vector(count, rng), q = random_vector(count, rng);
      CHECK(t.dot(p.data(), q.data(), count) ==
            doctest::Approx(simd::scalar::dot(p.data(), q.data(), count)).epsilon(1e-13));
    }
  }
}

TEST_CASE("set_backend switches the active table") {
  const auto before = simd::active_backend();
  simd::set_backend(simd::Backend::Scalar);
  CHECK(simd::active_backend() == simd::Backend::Scalar);
  CHECK(&simd::active() == &simd::table(simd::Backend::Scalar));
  simd::set_backend(before);
  if (!simd::backend_available(simd::Backend::Avx2))
    CHECK_THROWS(simd::set_backend(simd::Backend::Avx2));
}
