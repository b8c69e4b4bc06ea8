#pragma once

// Random small problems and finite-difference checks of the analytic
// gradients. Used by `asyncgp oracle-check` and the test suites.

#include <cstdint>

#include <Eigen/Dense>

#include "asyncgp/feature_map.hpp"
#include "asyncgp/kernel.hpp"
#include "asyncgp/objective.hpp"

namespace asyncgp::oracle {

struct Instance {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  HyperParams hp;
  VariationalState vs;
};

/// Inputs and Z uniform in [-2, 2], y uniform in [-1, 1], every log
/// hyperparameter uniform in [-1, 1], mu uniform in [-1, 1], U with diagonal
/// in [0.5, 1.5] and off-diagonal in [-0.3, 0.3].
Instance random_instance(std::uint64_t seed, Eigen::Index n, Eigen::Index d,
                         Eigen::Index m);

/// |analytic - numeric| / max(|numeric|, 1e-3), Euclidean norms over a block.
double relative_error(const Eigen::Ref<const Eigen::VectorXd>& analytic,
                      const Eigen::Ref<const Eigen::VectorXd>& numeric);

struct GradientErrors {
  double mu = 0.0;
  double U = 0.0;
  double log_sigma = 0.0;
  double log_a0 = 0.0;
  double log_eta = 0.0;
  double Z = 0.0;

  double max() const;
};

/// Compares the gradient of neg_elbo (data term + KL) with central
/// differences of neg_elbo, block by block. U is perturbed on its upper
/// triangle only. The hyperparameter blocks are skipped (left at 0) unless
/// the map is Cholesky.
GradientErrors gradient_errors(const Instance& inst,
                               FeatureMapKind kind = FeatureMapKind::Cholesky,
                               double step = 1e-5);

}  // namespace asyncgp::oracle
