#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "asyncgp/kernel.hpp"

namespace asyncgp {

enum class FeatureMapKind { Cholesky, Nystrom, EnsembleNystrom };

std::string_view to_string(FeatureMapKind kind);
/// Accepts "chol", "nystrom", "ensemble" (and the long names).
FeatureMapKind parse_feature_map(std::string_view name);

/// Raised when K_mm cannot be factorized even at the maximum jitter, or when
/// the inducing set contains duplicate rows.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One block of the feature vector: features = projection * k_{group}(x).
struct FeatureGroup {
  Eigen::MatrixXd Z;           // inducing rows used by this block
  Eigen::MatrixXd projection;  // rows = features in this block, cols = Z.rows()
  Eigen::Index offset = 0;     // position of the block in the feature vector
  Eigen::Index z_offset = 0;   // first row of this block within hp.Z
  // Nystrom only: eigenvectors / retained eigenvalues of K_group + jitter I.
  Eigen::MatrixXd Q;
  Eigen::VectorXd lambda;
};

/// Precomputed factorization behind phi(x).
///
/// Cholesky: phi(x) = L^T k_m(x) with L lower-triangular and
/// L L^T = (K_mm + jitter I)^-1.
/// Nystrom: phi(x) = diag(lambda)^-1/2 Q^T k_m(x), eigenpairs below
/// 1e-12 max(lambda) dropped, so dim() may be smaller than m.
/// EnsembleNystrom: Z is split into q contiguous groups, each factorized on
/// its own; the blocks are concatenated and scaled by q^-1/2 so that
/// Phi Phi^T is the average of the group approximations.
///
/// A Basis is tied to the HyperParams it was built from. Using it with other
/// hypers is not detected.
class Basis {
 public:
  FeatureMapKind kind = FeatureMapKind::Cholesky;
  double jitter = 0.0;
  Eigen::MatrixXd L;    // Cholesky only
  Eigen::MatrixXd Kmm;  // kernel on Z without jitter (Cholesky only)
  std::vector<FeatureGroup> groups;

  Eigen::Index dim() const { return dim_; }
  Eigen::Index num_inducing() const;

  /// phi(x) given the already computed cross-covariance against all of Z.
  void features_from_cross(const Eigen::Ref<const Eigen::VectorXd>& kx,
                           Eigen::Ref<Eigen::VectorXd> out) const;

  /// Same for a block: column i of `out` is phi of column i of `cross`.
  void features_from_cross_block(const Eigen::MatrixXd& cross,
                                 Eigen::MatrixXd& out) const;

  /// Feature matrix Phi, one row per row of A.
  Eigen::MatrixXd feature_matrix(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                 const HyperParams& hp) const;

 private:
  friend Basis build_basis(const HyperParams&, FeatureMapKind, double, int);
  Eigen::Index dim_ = 0;
};

double default_jitter(const HyperParams& hp);

/// Factorizes K_mm + jitter I, doubling jitter on failure up to 1e-2 a0^2.
/// ensemble_groups is only used by EnsembleNystrom.
Basis build_basis(const HyperParams& hp, FeatureMapKind kind, double jitter,
                  int ensemble_groups = 2);
inline Basis build_basis(const HyperParams& hp, FeatureMapKind kind) {
  return build_basis(hp, kind, default_jitter(hp));
}

Eigen::VectorXd phi(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Basis& basis, const HyperParams& hp);

/// k(x,x) - |phi(x)|^2, clamped at zero. Raw values below -1e-8 bump
/// ktilde_warning_count().
double ktilde(const Eigen::Ref<const Eigen::VectorXd>& x, const Basis& basis,
              const HyperParams& hp);

std::uint64_t ktilde_warning_count();

}  // namespace asyncgp
