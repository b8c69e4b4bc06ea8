#pragma once

#include <Eigen/Dense>

namespace asyncgp {

/// Kernel and noise parameters of the ARD squared-exponential model.
///
/// Everything positive is stored as a logarithm so gradients are taken with
/// respect to the log values directly:
///   log_sigma  ln(sigma), observation noise std; beta = sigma^-2
///   log_a0     ln(a0), signal std
///   log_eta    ln(eta), per-dimension inverse squared lengthscales
///   Z          m x d inducing inputs, one point per row
struct HyperParams {
  double log_sigma = 0.0;
  double log_a0 = 0.0;
  Eigen::VectorXd log_eta;
  Eigen::MatrixXd Z;

  Eigen::Index dim() const { return log_eta.size(); }
  Eigen::Index num_inducing() const { return Z.rows(); }

  double beta() const;
  double a0() const;
  double signal_variance() const;
  Eigen::VectorXd eta() const;

  /// Throws std::invalid_argument on non-finite values or shape mismatch.
  void validate() const;

  static HyperParams defaults(Eigen::Index dim, Eigen::MatrixXd inducing);
};

bool operator==(const HyperParams& a, const HyperParams& b);

/// a0^2 exp(-1/2 (x - x2)^T diag(eta) (x - x2)).
double ard_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& x2,
                  const HyperParams& hp);

/// [K]_ij = k(a_i, b_j) for the rows of A and B.
Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& A,
                              const Eigen::Ref<const Eigen::MatrixXd>& B,
                              const HyperParams& hp);

/// Diagonal of kernel_matrix(A, A) without forming it.
Eigen::VectorXd kernel_diag(const Eigen::Ref<const Eigen::MatrixXd>& A,
                            const HyperParams& hp);

/// Cross-covariance k_m(x) between one input and every row of Z, written to
/// `out`. `eta` must be hp.eta(); passing it in avoids recomputing the
/// exponentials per sample.
void cross_kernel_row(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::MatrixXd& Z, const Eigen::VectorXd& eta,
                      double signal_variance, Eigen::Ref<Eigen::VectorXd> out);

}  // namespace asyncgp
