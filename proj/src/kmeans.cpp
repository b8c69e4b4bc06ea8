#include "asyncgp/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace asyncgp {

namespace {

Eigen::Index count_distinct(const Eigen::MatrixXd& X) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
    return false;
  };
  std::sort(idx.begin(), idx.end(), less);
  Eigen::Index distinct = X.rows() > 0 ? 1 : 0;
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (less(idx[i - 1], idx[i])) ++distinct;
  return distinct;
}

}  // namespace

Eigen::MatrixXd kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            Eigen::Index m, std::uint64_t seed,
                            const KMeansOptions& options) {
  if (m < 1) throw std::invalid_argument("kmeans: m must be >= 1");
  if (options.max_rows < 1) throw std::invalid_argument("kmeans: max_rows < 1");
  std::mt19937_64 rng(seed);

  Eigen::MatrixXd P;
  if (X.rows() > options.max_rows) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    for (Eigen::Index i = 0; i < options.max_rows; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, X.rows() - 1);
      std::swap(idx[static_cast<std::size_t>(i)],
                idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(options.max_rows));
    std::sort(idx.begin(), idx.end());
    P.resize(options.max_rows, X.cols());
    for (Eigen::Index i = 0; i < options.max_rows; ++i)
      P.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
  } else {
    P = X;
  }
  const Eigen::Index n = P.rows();
  if (count_distinct(P) < m)
    throw std::invalid_argument("kmeans: fewer distinct rows than m = " +
                                std::to_string(m));

  // k-means++ seeding
  Eigen::MatrixXd C(m, P.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  C.row(0) = P.row(first(rng));
  Eigen::VectorXd d2 = (P.rowwise() - C.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 1; c < m; ++c) {
    const double total = d2.sum();
    double target = unit(rng) * total;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2(i) <= 0.0) continue;
      chosen = i;
      target -= d2(i);
      if (target < 0.0) break;
    }
    C.row(c) = P.row(chosen);
    d2 = d2.cwiseMin((P.rowwise() - C.row(c)).rowwise().squaredNorm());
  }

  // Lloyd
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < options.max_iters; ++it) {
    bool changed = false;
    Eigen::VectorXd best(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < m; ++c) {
        const double dd = (P.row(i) - C.row(c)).squaredNorm();
        if (dd < bd) {
          bd = dd;
          arg = c;
        }
      }
      best(i) = bd;
      if (assign[static_cast<std::size_t>(i)] != arg) {
        assign[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    if (!changed) break;

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, P.cols());
    Eigen::VectorXi count = Eigen::VectorXi::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(assign[static_cast<std::size_t>(i)]) += P.row(i);
      ++count(assign[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index c = 0; c < m; ++c) {
      if (count(c) > 0) {
        C.row(c) = sum.row(c) / static_cast<double>(count(c));
      } else {
        // Empty cluster: move it to the point farthest from its center.
        Eigen::Index far = 0;
        best.maxCoeff(&far);
        C.row(c) = P.row(far);
        best(far) = 0.0;
        assign[static_cast<std::size_t>(far)] = c;
      }
    }
  }
  return C;
}

}  // namespace asyncgp
