#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace asyncgp {

struct KMeansOptions {
  Eigen::Index max_rows = 10000;
  int max_iters = 100;
};

/// m centers from k-means++ seeding followed by Lloyd iterations on a seeded
/// uniform subsample of at most max_rows rows. Throws std::invalid_argument
/// when the subsample has fewer than m distinct rows.
Eigen::MatrixXd kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            Eigen::Index m, std::uint64_t seed,
                            const KMeansOptions& options = {});

}  // namespace asyncgp
