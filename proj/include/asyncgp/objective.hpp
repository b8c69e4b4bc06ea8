#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "asyncgp/feature_map.hpp"
#include "asyncgp/kernel.hpp"

namespace asyncgp {

/// q(w) = N(mu, U^T U) with U upper-triangular, positive diagonal.
struct VariationalState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd U;

  Eigen::Index dim() const { return mu.size(); }
  Eigen::MatrixXd covariance() const { return U.transpose() * U; }

  /// Throws std::invalid_argument unless U is square, upper-triangular with a
  /// strictly positive diagonal and everything is finite.
  void validate() const;

  /// mu = 0, U = I.
  static VariationalState prior(Eigen::Index m);
};

bool operator==(const VariationalState& a, const VariationalState& b);

/// Gradient of sum_{i in shard} g_i with respect to every parameter block.
/// d_U is upper-triangular. Hyperparameter blocks are zero (and
/// has_hyper_grad is false) for the Nystrom feature maps.
struct LocalGradient {
  Eigen::VectorXd d_mu;
  Eigen::MatrixXd d_U;
  double d_log_sigma = 0.0;
  double d_log_a0 = 0.0;
  Eigen::VectorXd d_log_eta;
  Eigen::MatrixXd d_Z;
  double local_neg_elbo = 0.0;
  Eigen::Index count = 0;
  bool has_hyper_grad = false;

  static LocalGradient zeros(Eigen::Index features, Eigen::Index inducing,
                             Eigen::Index dim);
  LocalGradient& operator+=(const LocalGradient& other);
  bool all_finite() const;
};

bool operator==(const LocalGradient& a, const LocalGradient& b);

/// A non-finite value appeared while processing one sample.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, Eigen::Index sample)
      : std::runtime_error(what), sample_(sample) {}
  Eigen::Index sample() const { return sample_; }

 private:
  Eigen::Index sample_;
};

struct LocalTermOptions {
  /// Compute d_log_sigma, d_log_a0, d_log_eta and d_Z (Cholesky map only).
  bool hyper_gradients = true;
};

/// Sum over the shard of
///   g_i = 1/2 ln 2pi - 1/2 ln beta
///       + beta/2 (y_i^2 - 2 y_i phi_i^T mu + phi_i^T (mu mu^T + Sigma) phi_i
///                 + k_ii - phi_i^T phi_i)
/// and its partial derivatives. Per-sample contributions are accumulated with
/// compensated summation.
LocalGradient local_terms(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXd>& y,
                          const VariationalState& vs, const HyperParams& hp,
                          const Basis& basis, LocalTermOptions options = {});

struct GlobalTerm {
  double h = 0.0;
  Eigen::VectorXd d_mu;
  Eigen::MatrixXd d_U;
};

/// KL(q || N(0, I)) = 1/2 (-ln|Sigma| - m + tr(Sigma) + mu^T mu), with
/// ln|Sigma| = 2 sum ln U_ii; d_mu = mu, d_U = U - diag(1 / U_ii).
GlobalTerm global_term(const VariationalState& vs);

/// sum_i g_i + h, evaluating the data term over `shards` contiguous blocks.
double neg_elbo(const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y,
                const VariationalState& vs, const HyperParams& hp,
                const Basis& basis, int shards = 1);

/// Closed-form maximizer of the bound over q for fixed Phi and beta:
/// Sigma = (I + beta Phi^T Phi)^-1, mu = beta Sigma Phi^T y.
VariationalState optimal_q(const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y,
                           const HyperParams& hp, const Basis& basis);

/// Row ranges [begin, end) splitting n rows into `parts` near-equal blocks.
std::vector<std::pair<Eigen::Index, Eigen::Index>> partition_rows(
    Eigen::Index n, int parts);

}  // namespace asyncgp
