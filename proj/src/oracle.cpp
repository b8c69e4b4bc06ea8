#include "asyncgp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "asyncgp/feature_map.hpp"

namespace asyncgp::oracle {

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_noisy_gram(
    const Eigen::Ref<const Eigen::MatrixXd>& X, const HyperParams& hp,
    Eigen::Index max_rows) {
  if (X.rows() == 0) throw std::invalid_argument("oracle: empty dataset");
  if (X.rows() > max_rows)
    throw std::invalid_argument("oracle: " + std::to_string(X.rows()) +
                                " rows exceeds cap " + std::to_string(max_rows));
  Eigen::MatrixXd K = kernel_matrix(X, X, hp);
  K.diagonal().array() += 1.0 / hp.beta() + 1e-10 * hp.signal_variance();
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("oracle: K_nn + noise not positive definite");
  return llt;
}

}  // namespace

double exact_log_evidence(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXd>& y,
                          const HyperParams& hp, Eigen::Index max_rows) {
  const auto llt = factor_noisy_gram(X, hp, max_rows);
  const Eigen::MatrixXd Lk = llt.matrixL();
  const Eigen::VectorXd white = Lk.triangularView<Eigen::Lower>().solve(y);
  const double log_det = 2.0 * Lk.diagonal().array().log().sum();
  const auto n = static_cast<double>(y.size());
  return -0.5 * white.squaredNorm() - 0.5 * log_det -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

ExactPosterior exact_posterior(const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& y,
                               const HyperParams& hp, Eigen::Index max_rows) {
  const auto llt = factor_noisy_gram(X, hp, max_rows);
  ExactPosterior post;
  post.X = X;
  post.alpha_weights = llt.solve(y);
  post.chol_Kny = llt.matrixL();
  return post;
}

Prediction exact_predict(const Eigen::Ref<const Eigen::VectorXd>& x_star,
                         const ExactPosterior& post, const HyperParams& hp) {
  const Eigen::VectorXd k_star =
      kernel_matrix(post.X, x_star.transpose(), hp).col(0);
  const Eigen::VectorXd v =
      post.chol_Kny.triangularView<Eigen::Lower>().solve(k_star);
  Prediction p;
  p.mean = k_star.dot(post.alpha_weights);
  p.var = std::max(ard_kernel(x_star, x_star, hp) - v.squaredNorm(), 0.0);
  return p;
}

Eigen::VectorXd finite_diff(const ScalarFunction& fun,
                            const Eigen::VectorXd& point, double step) {
  Eigen::VectorXd grad(point.size());
  Eigen::VectorXd probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = fun(probe);
    probe[i] = point[i] - step;
    const double down = fun(probe);
    probe[i] = point[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace asyncgp::oracle
