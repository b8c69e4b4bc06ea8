#pragma once

// Exact GP regression and brute-force numerics. O(n^3); desk scale only.

#include <functional>

#include <Eigen/Dense>

#include "asyncgp/kernel.hpp"

namespace asyncgp::oracle {

inline constexpr Eigen::Index kDefaultMaxRows = 2000;

struct ExactPosterior {
  Eigen::MatrixXd X;
  Eigen::VectorXd alpha_weights;  // (K_nn + beta^-1 I)^-1 y
  Eigen::MatrixXd chol_Kny;       // lower factor of K_nn + beta^-1 I
};

/// log N(y | 0, K_nn + beta^-1 I).
double exact_log_evidence(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXd>& y,
                          const HyperParams& hp,
                          Eigen::Index max_rows = kDefaultMaxRows);

ExactPosterior exact_posterior(const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& y,
                               const HyperParams& hp,
                               Eigen::Index max_rows = kDefaultMaxRows);

struct Prediction {
  double mean = 0.0;
  double var = 0.0;
};

/// Posterior of the latent f at x_star. Variance is clamped at zero.
Prediction exact_predict(const Eigen::Ref<const Eigen::VectorXd>& x_star,
                         const ExactPosterior& post, const HyperParams& hp);

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central differences, one coordinate at a time.
Eigen::VectorXd finite_diff(const ScalarFunction& fun,
                            const Eigen::VectorXd& point, double step = 1e-5);

}  // namespace asyncgp::oracle
