#include "asyncgp/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "asyncgp/simd.hpp"

namespace asyncgp {

double HyperParams::beta() const { return std::exp(-2.0 * log_sigma); }
double HyperParams::a0() const { return std::exp(log_a0); }
double HyperParams::signal_variance() const { return std::exp(2.0 * log_a0); }
Eigen::VectorXd HyperParams::eta() const { return log_eta.array().exp(); }

void HyperParams::validate() const {
  if (dim() < 1) throw std::invalid_argument("HyperParams: d must be >= 1");
  if (Z.rows() < 1) throw std::invalid_argument("HyperParams: m must be >= 1");
  if (Z.cols() != dim())
    throw std::invalid_argument("HyperParams: Z has " +
                                std::to_string(Z.cols()) +
                                " columns, expected " + std::to_string(dim()));
  if (!std::isfinite(log_sigma) || !std::isfinite(log_a0) ||
      !log_eta.allFinite() || !Z.allFinite())
    throw std::invalid_argument("HyperParams: non-finite parameter");
}

HyperParams HyperParams::defaults(Eigen::Index dim, Eigen::MatrixXd inducing) {
  HyperParams hp;
  hp.log_eta = Eigen::VectorXd::Zero(dim);
  hp.Z = std::move(inducing);
  return hp;
}

bool operator==(const HyperParams& a, const HyperParams& b) {
  return a.log_sigma == b.log_sigma && a.log_a0 == b.log_a0 &&
         a.log_eta.size() == b.log_eta.size() && a.log_eta == b.log_eta &&
         a.Z.rows() == b.Z.rows() && a.Z.cols() == b.Z.cols() && a.Z == b.Z;
}

double ard_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& x2,
                  const HyperParams& hp) {
  if (x.size() != hp.dim() || x2.size() != hp.dim())
    throw std::invalid_argument("ard_kernel: dimension mismatch");
  double r2 = 0.0;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double diff = x[c] - x2[c];
    r2 += std::exp(hp.log_eta[c]) * diff * diff;
  }
  return hp.signal_variance() * std::exp(-0.5 * r2);
}

void cross_kernel_row(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::MatrixXd& Z, const Eigen::VectorXd& eta,
                      double signal_variance, Eigen::Ref<Eigen::VectorXd> out) {
  const auto count = static_cast<std::size_t>(Z.rows());
  simd::active().weighted_sq_dist(x.data(), Z.data(), count, count,
                                  static_cast<std::size_t>(Z.cols()),
                                  eta.data(), out.data());
  for (Eigen::Index j = 0; j < out.size(); ++j)
    out[j] = signal_variance * std::exp(-0.5 * out[j]);
}

Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& A,
                              const Eigen::Ref<const Eigen::MatrixXd>& B,
                              const HyperParams& hp) {
  if (A.cols() != hp.dim() || B.cols() != hp.dim())
    throw std::invalid_argument("kernel_matrix: column count must equal d");
  const Eigen::VectorXd eta = hp.eta();
  const double sv = hp.signal_variance();
  // Distances are computed row-by-row of A against the columns of B.
  const Eigen::MatrixXd Bc = B;
  Eigen::MatrixXd K(A.rows(), B.rows());
  Eigen::VectorXd row(B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const Eigen::VectorXd a = A.row(i).transpose();
    cross_kernel_row(a, Bc, eta, sv, row);
    K.row(i) = row.transpose();
  }
  return K;
}

Eigen::VectorXd kernel_diag(const Eigen::Ref<const Eigen::MatrixXd>& A,
                            const HyperParams& hp) {
  if (A.rows() > 0 && A.cols() != hp.dim())
    throw std::invalid_argument("kernel_diag: column count must equal d");
  return Eigen::VectorXd::Constant(A.rows(), hp.signal_variance());
}

}  // namespace asyncgp
