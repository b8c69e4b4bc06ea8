#include "asyncgp/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace asyncgp {

namespace {

std::atomic<std::uint64_t> g_ktilde_warnings{0};

constexpr double kMaxJitterScale = 1e-2;
constexpr double kEigenFloor = 1e-12;
constexpr double kDuplicateTol = 1e-12;

void check_duplicates(const Eigen::MatrixXd& Z) {
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < Z.rows(); ++j)
      if ((Z.row(i) - Z.row(j)).cwiseAbs().maxCoeff() <= kDuplicateTol) {
        std::ostringstream msg;
        msg << "duplicate inducing rows " << i << " and " << j;
        throw FactorizationError(msg.str());
      }
}

// Unblocked Cholesky used only to report where a factorization broke down.
std::pair<Eigen::Index, double> first_bad_pivot(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = A(j, j) - C.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) return {j, pivot};
    C(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i)
      C(i, j) = (A(i, j) - C.row(i).head(j).dot(C.row(j).head(j))) / C(j, j);
  }
  return {-1, 0.0};
}

// Lower-triangular L with L L^T = A^-1, via the UL factorization A = V V^T
// (V upper) obtained from the Cholesky factor of the reversed matrix.
bool inverse_cholesky(const Eigen::MatrixXd& A, Eigen::MatrixXd& L) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd reversed = A.reverse();
  Eigen::LLT<Eigen::MatrixXd> llt(reversed);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd C = llt.matrixL();
  if (!(C.diagonal().minCoeff() > 0.0) || !C.allFinite()) return false;
  const Eigen::MatrixXd V = C.reverse();
  L = V.triangularView<Eigen::Upper>()
          .solve(Eigen::MatrixXd::Identity(n, n))
          .transpose();
  L.triangularView<Eigen::StrictlyUpper>().setZero();
  return L.allFinite();
}

bool nystrom_group(const Eigen::MatrixXd& A, double scale, FeatureGroup& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  if (eig.info() != Eigen::Success) return false;
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double top = values.maxCoeff();
  if (!(top > 0.0)) return false;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = values.size() - 1; i >= 0; --i)
    if (values[i] >= kEigenFloor * top && values[i] > 0.0) keep.push_back(i);
  const auto r = static_cast<Eigen::Index>(keep.size());
  g.Q.resize(A.rows(), r);
  g.lambda.resize(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    g.Q.col(k) = eig.eigenvectors().col(keep[k]);
    g.lambda[k] = values[keep[k]];
  }
  g.projection =
      (scale * g.lambda.array().rsqrt()).matrix().asDiagonal() * g.Q.transpose();
  return g.projection.allFinite();
}

}  // namespace

std::string_view to_string(FeatureMapKind kind) {
  switch (kind) {
    case FeatureMapKind::Cholesky:
      return "chol";
    case FeatureMapKind::Nystrom:
      return "nystrom";
    case FeatureMapKind::EnsembleNystrom:
      return "ensemble";
  }
  return "unknown";
}

FeatureMapKind parse_feature_map(std::string_view name) {
  if (name == "chol" || name == "cholesky") return FeatureMapKind::Cholesky;
  if (name == "nystrom") return FeatureMapKind::Nystrom;
  if (name == "ensemble" || name == "ensemble-nystrom")
    return FeatureMapKind::EnsembleNystrom;
  throw std::invalid_argument("unknown feature map: " + std::string(name));
}

Eigen::Index Basis::num_inducing() const {
  Eigen::Index m = 0;
  for (const auto& g : groups) m += g.Z.rows();
  return m;
}

void Basis::features_from_cross(const Eigen::Ref<const Eigen::VectorXd>& kx,
                                Eigen::Ref<Eigen::VectorXd> out) const {
  for (const auto& g : groups)
    out.segment(g.offset, g.projection.rows()).noalias() =
        g.projection * kx.segment(g.z_offset, g.Z.rows());
}

void Basis::features_from_cross_block(const Eigen::MatrixXd& cross,
                                      Eigen::MatrixXd& out) const {
  out.resize(dim_, cross.cols());
  for (const auto& g : groups)
    out.middleRows(g.offset, g.projection.rows()).noalias() =
        g.projection * cross.middleRows(g.z_offset, g.Z.rows());
}

Eigen::MatrixXd Basis::feature_matrix(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                      const HyperParams& hp) const {
  const Eigen::VectorXd eta = hp.eta();
  const double sv = hp.signal_variance();
  Eigen::MatrixXd Phi(A.rows(), dim_);
  Eigen::VectorXd kx(hp.Z.rows());
  Eigen::VectorXd f(dim_);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    cross_kernel_row(A.row(i).transpose(), hp.Z, eta, sv, kx);
    features_from_cross(kx, f);
    Phi.row(i) = f.transpose();
  }
  return Phi;
}

double default_jitter(const HyperParams& hp) {
  return 1e-8 * hp.signal_variance();
}

Basis build_basis(const HyperParams& hp, FeatureMapKind kind, double jitter,
                  int ensemble_groups) {
  hp.validate();
  check_duplicates(hp.Z);
  const double sv = hp.signal_variance();
  const double max_jitter = kMaxJitterScale * sv;
  if (jitter < 0.0) throw std::invalid_argument("build_basis: negative jitter");
  const Eigen::Index m = hp.Z.rows();

  // Group layout.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> layout;  // (start, size)
  if (kind == FeatureMapKind::EnsembleNystrom) {
    const Eigen::Index q =
        std::clamp<Eigen::Index>(ensemble_groups, 1, m);
    Eigen::Index start = 0;
    for (Eigen::Index l = 0; l < q; ++l) {
      const Eigen::Index size = m / q + (l < m % q ? 1 : 0);
      layout.emplace_back(start, size);
      start += size;
    }
  } else {
    layout.emplace_back(0, m);
  }
  const double scale =
      kind == FeatureMapKind::EnsembleNystrom
          ? 1.0 / std::sqrt(static_cast<double>(layout.size()))
          : 1.0;

  const Eigen::MatrixXd Kmm = kernel_matrix(hp.Z, hp.Z, hp);
  double j = jitter;
  while (true) {
    Basis basis;
    basis.kind = kind;
    basis.jitter = j;
    bool ok = true;
    Eigen::MatrixXd failed;
    Eigen::Index offset = 0;
    for (const auto& [start, size] : layout) {
      FeatureGroup g;
      g.Z = hp.Z.middleRows(start, size);
      g.z_offset = start;
      g.offset = offset;
      Eigen::MatrixXd A = Kmm.block(start, start, size, size);
      A.diagonal().array() += j;
      if (kind == FeatureMapKind::Cholesky) {
        ok = inverse_cholesky(A, basis.L);
        if (ok) g.projection = basis.L.transpose();
      } else {
        ok = nystrom_group(A, scale, g);
      }
      if (!ok) {
        failed = std::move(A);
        break;
      }
      offset += g.projection.rows();
      basis.groups.push_back(std::move(g));
    }
    if (ok) {
      basis.dim_ = offset;
      if (kind == FeatureMapKind::Cholesky) basis.Kmm = Kmm;
      return basis;
    }
    const double next = j > 0.0 ? 2.0 * j : default_jitter(hp);
    if (next > max_jitter) {
      std::ostringstream msg;
      msg << "K_mm factorization failed at jitter " << j;
      if (kind == FeatureMapKind::Cholesky) {
        const auto [index, pivot] = first_bad_pivot(failed.reverse());
        msg << ": pivot " << index << " of the reversed matrix is " << pivot;
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            failed, Eigen::EigenvaluesOnly);
        msg << ": largest eigenvalue " << eig.eigenvalues().maxCoeff();
      }
      throw FactorizationError(msg.str());
    }
    j = next;
  }
}

Eigen::VectorXd phi(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Basis& basis, const HyperParams& hp) {
  if (x.size() != hp.dim())
    throw std::invalid_argument("phi: dimension mismatch");
  Eigen::VectorXd kx(hp.Z.rows());
  cross_kernel_row(x, hp.Z, hp.eta(), hp.signal_variance(), kx);
  Eigen::VectorXd out(basis.dim());
  basis.features_from_cross(kx, out);
  return out;
}

double ktilde(const Eigen::Ref<const Eigen::VectorXd>& x, const Basis& basis,
              const HyperParams& hp) {
  const Eigen::VectorXd f = phi(x, basis, hp);
  const double raw = hp.signal_variance() - f.squaredNorm();
  if (raw < -1e-8) g_ktilde_warnings.fetch_add(1, std::memory_order_relaxed);
  return std::max(raw, 0.0);
}

std::uint64_t ktilde_warning_count() {
  return g_ktilde_warnings.load(std::memory_order_relaxed);
}

}  // namespace asyncgp
