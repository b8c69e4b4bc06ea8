#include "asyncgp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "asyncgp/simd.hpp"

namespace asyncgp {

namespace {

constexpr Eigen::Index kBlockRows = 64;

// Element-wise Neumaier accumulator over a dense column-major block.
class Compensated {
 public:
  Compensated(Eigen::Index rows, Eigen::Index cols)
      : sum_(Eigen::MatrixXd::Zero(rows, cols)),
        comp_(Eigen::MatrixXd::Zero(rows, cols)) {}

  /// Adds a block partial sum of the same shape.
  void add(const Eigen::MatrixXd& x) {
    simd::active().compensated_axpy(sum_.data(), comp_.data(), 1.0, x.data(),
                                    static_cast<std::size_t>(x.size()));
  }
  Eigen::MatrixXd value() const { return sum_ + comp_; }

 private:
  Eigen::MatrixXd sum_;
  Eigen::MatrixXd comp_;
};

class CompensatedScalar {
 public:
  void add(double y) {
    const double t = sum_ + y;
    if (std::fabs(sum_) >= std::fabs(y))
      comp_ += (sum_ - t) + y;
    else
      comp_ += (y - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Upper-triangular mask with 1/2 on the diagonal.
Eigen::MatrixXd psi_mask(Eigen::Index m) {
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(m, m);
  psi.triangularView<Eigen::StrictlyUpper>().setOnes();
  psi.diagonal().setConstant(0.5);
  return psi;
}

}  // namespace

void VariationalState::validate() const {
  if (U.rows() != mu.size() || U.cols() != mu.size())
    throw std::invalid_argument("VariationalState: U must be m x m");
  if (!mu.allFinite() || !U.allFinite())
    throw std::invalid_argument("VariationalState: non-finite entry");
  if (!(U.diagonal().minCoeff() > 0.0))
    throw std::invalid_argument("VariationalState: U diagonal must be > 0");
  for (Eigen::Index j = 0; j < U.cols(); ++j)
    for (Eigen::Index i = j + 1; i < U.rows(); ++i)
      if (U(i, j) != 0.0)
        throw std::invalid_argument("VariationalState: U not upper-triangular");
}

VariationalState VariationalState::prior(Eigen::Index m) {
  return {Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Identity(m, m)};
}

bool operator==(const VariationalState& a, const VariationalState& b) {
  return a.mu.size() == b.mu.size() && a.mu == b.mu && a.U == b.U;
}

LocalGradient LocalGradient::zeros(Eigen::Index features, Eigen::Index inducing,
                                   Eigen::Index dim) {
  LocalGradient g;
  g.d_mu = Eigen::VectorXd::Zero(features);
  g.d_U = Eigen::MatrixXd::Zero(features, features);
  g.d_log_eta = Eigen::VectorXd::Zero(dim);
  g.d_Z = Eigen::MatrixXd::Zero(inducing, dim);
  return g;
}

LocalGradient& LocalGradient::operator+=(const LocalGradient& other) {
  d_mu += other.d_mu;
  d_U += other.d_U;
  d_log_sigma += other.d_log_sigma;
  d_log_a0 += other.d_log_a0;
  d_log_eta += other.d_log_eta;
  d_Z += other.d_Z;
  local_neg_elbo += other.local_neg_elbo;
  count += other.count;
  has_hyper_grad = has_hyper_grad && other.has_hyper_grad;
  return *this;
}

bool LocalGradient::all_finite() const {
  return d_mu.allFinite() && d_U.allFinite() && std::isfinite(d_log_sigma) &&
         std::isfinite(d_log_a0) && d_log_eta.allFinite() && d_Z.allFinite() &&
         std::isfinite(local_neg_elbo);
}

bool operator==(const LocalGradient& a, const LocalGradient& b) {
  return a.d_mu == b.d_mu && a.d_U == b.d_U &&
         a.d_log_sigma == b.d_log_sigma && a.d_log_a0 == b.d_log_a0 &&
         a.d_log_eta == b.d_log_eta && a.d_Z == b.d_Z &&
         a.local_neg_elbo == b.local_neg_elbo && a.count == b.count &&
         a.has_hyper_grad == b.has_hyper_grad;
}

LocalGradient local_terms(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const Eigen::Ref<const Eigen::VectorXd>& y,
                          const VariationalState& vs, const HyperParams& hp,
                          const Basis& basis, LocalTermOptions options) {
  if (X.rows() == 0) throw std::invalid_argument("local_terms: empty shard");
  if (X.rows() != y.size())
    throw std::invalid_argument("local_terms: X and y row counts differ");
  if (X.cols() != hp.dim())
    throw std::invalid_argument("local_terms: X column count must equal d");
  const Eigen::Index mf = basis.dim();
  if (vs.dim() != mf)
    throw std::invalid_argument("local_terms: state and basis dimension differ");

  const Eigen::Index m = hp.num_inducing();
  const Eigen::Index d = hp.dim();
  const bool hyper =
      options.hyper_gradients && basis.kind == FeatureMapKind::Cholesky;

  const double beta = hp.beta();
  const double sv = hp.signal_variance();
  const Eigen::VectorXd eta = hp.eta();
  const double constant = 0.5 * std::log(2.0 * std::numbers::pi) -
                          0.5 * std::log(beta);
  const auto U = vs.U.triangularView<Eigen::Upper>();

  CompensatedScalar g_sum, dsigma_sum, da0_sum;
  Compensated y_phi(mf, 1), phi_phi(mf, mf);
  // Hyperparameter accumulators (Cholesky map only).
  Compensated v_sum(hyper ? m : 0, 1), v_x(hyper ? m : 0, hyper ? d : 0),
      x_sq(hyper ? d : 0, 1), p_phi(hyper ? mf : 0, hyper ? mf : 0);

  // Samples are processed in fixed blocks; block partial sums are formed with
  // dense products and folded into the compensated accumulators.
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(m, kBlockRows), F(mf, kBlockRows), UF(mf, kBlockRows),
      MF(mf, kBlockRows), XT, P, LP, Vb, part;
  Eigen::VectorXd mu_f(kBlockRows), s(kBlockRows), colsum;
  for (Eigen::Index b0 = 0; b0 < n; b0 += kBlockRows) {
    const Eigen::Index nb = std::min(kBlockRows, n - b0);
    const auto Xb = X.middleRows(b0, nb);
    const auto yb = y.segment(b0, nb);
    XT = Xb.transpose();
    K.resize(m, nb);
    for (Eigen::Index i = 0; i < nb; ++i)
      cross_kernel_row(XT.col(i), hp.Z, eta, sv, K.col(i));
    F.resize(mf, nb);
    basis.features_from_cross_block(K, F);
    UF.noalias() = U * F;
    mu_f.noalias() = F.transpose() * vs.mu;
    // (mu mu^T + Sigma) phi for every sample
    MF.noalias() = vs.U.transpose().triangularView<Eigen::Lower>() * UF;
    MF.noalias() += vs.mu * mu_f.transpose();

    s.resize(nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
      const double yi = yb[i];
      const double f_m_f = mu_f[i] * mu_f[i] + UF.col(i).squaredNorm();
      const double f_f = F.col(i).squaredNorm();
      s[i] = yi * yi - 2.0 * yi * mu_f[i] + f_m_f + sv - f_f;
      if (!std::isfinite(s[i]) || !F.col(i).allFinite())
        throw NumericalError("local_terms: non-finite value at sample " +
                                 std::to_string(b0 + i),
                             b0 + i);
      g_sum.add(constant + 0.5 * beta * s[i]);
      dsigma_sum.add(1.0 - beta * s[i]);
      da0_sum.add(beta * (-yi * mu_f[i] + f_m_f + sv - f_f));
    }
    part.noalias() = F * yb;
    y_phi.add(part);
    part.noalias() = F * F.transpose();
    phi_phi.add(part);

    if (hyper) {
      P = MF - vs.mu * yb.transpose() - F;
      LP.noalias() = basis.L.triangularView<Eigen::Lower>() * P;
      Vb = LP.cwiseProduct(K);
      colsum = Vb.colwise().sum().transpose();
      part = Vb.rowwise().sum();
      v_sum.add(part);
      part.noalias() = Vb * Xb;
      v_x.add(part);
      part.noalias() = Xb.cwiseProduct(Xb).transpose() * colsum;
      x_sq.add(part);
      part.noalias() = P * F.transpose();
      p_phi.add(part);
    }
  }

  LocalGradient out = LocalGradient::zeros(mf, m, d);
  out.count = X.rows();
  out.local_neg_elbo = g_sum.value();
  const Eigen::MatrixXd sum_phi_phi = phi_phi.value();
  out.d_mu = beta * (sum_phi_phi * vs.mu - y_phi.value());
  out.d_U.noalias() = vs.U.triangularView<Eigen::Upper>() * sum_phi_phi;
  out.d_U *= beta;
  out.d_U.triangularView<Eigen::StrictlyLower>().setZero();
  if (!hyper) return out;

  out.has_hyper_grad = true;
  out.d_log_sigma = dsigma_sum.value();
  out.d_log_a0 = da0_sum.value();

  // Gradient through the Cholesky factor of K_mm^-1, summed over samples:
  // T = [L ((sum p phi^T) o Psi) L^T] o K_mm.
  const Eigen::MatrixXd& L = basis.L;
  const Eigen::MatrixXd W = p_phi.value().cwiseProduct(psi_mask(mf));
  const Eigen::MatrixXd T = (L * W * L.transpose()).cwiseProduct(basis.Kmm);
  const Eigen::MatrixXd S = T + T.transpose();

  const Eigen::VectorXd sv_sum = v_sum.value();
  const Eigen::MatrixXd V = v_x.value();
  const Eigen::VectorXd W2 = x_sq.value();
  const Eigen::MatrixXd& Z = hp.Z;
  const Eigen::MatrixXd Zeta = Z * eta.asDiagonal();
  const Eigen::MatrixXd Zsq = Z.cwiseProduct(Z);
  const Eigen::MatrixXd SZ = S * Z;
  const Eigen::VectorXd S1 = S.rowwise().sum();

  out.d_Z = beta * (V * eta.asDiagonal() - sv_sum.asDiagonal() * Zeta -
                    SZ * eta.asDiagonal() +
                    (S1 * eta.transpose()).cwiseProduct(Z));

  const Eigen::RowVectorXd bracket =
      2.0 * Z.cwiseProduct(V).colwise().sum() - W2.transpose() -
      sv_sum.transpose() * Zsq - Z.cwiseProduct(SZ).colwise().sum() +
      (S * Zsq).colwise().sum();
  out.d_log_eta = 0.5 * beta * bracket.transpose().cwiseProduct(eta);
  return out;
}

GlobalTerm global_term(const VariationalState& vs) {
  const Eigen::Index m = vs.dim();
  if (vs.U.rows() != m || vs.U.cols() != m)
    throw std::invalid_argument("global_term: U must be m x m");
  if (!(vs.U.diagonal().minCoeff() > 0.0))
    throw std::invalid_argument("global_term: U diagonal must be positive");
  const auto Uu = vs.U.triangularView<Eigen::Upper>();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) log_det += 2.0 * std::log(vs.U(i, i));
  const Eigen::MatrixXd Udense = Uu;
  GlobalTerm out;
  out.h = 0.5 * (-log_det - static_cast<double>(m) + Udense.squaredNorm() +
                 vs.mu.squaredNorm());
  out.d_mu = vs.mu;
  out.d_U = Udense;
  out.d_U.diagonal() -= vs.U.diagonal().cwiseInverse();
  return out;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> partition_rows(
    Eigen::Index n, int parts) {
  if (parts < 1) throw std::invalid_argument("partition_rows: parts < 1");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  Eigen::Index start = 0;
  for (int k = 0; k < parts; ++k) {
    const Eigen::Index size = n / parts + (k < n % parts ? 1 : 0);
    out.emplace_back(start, start + size);
    start += size;
  }
  return out;
}

double neg_elbo(const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y,
                const VariationalState& vs, const HyperParams& hp,
                const Basis& basis, int shards) {
  if (X.rows() == 0) throw std::invalid_argument("neg_elbo: empty dataset");
  CompensatedScalar total;
  for (const auto& [begin, end] : partition_rows(X.rows(), shards)) {
    if (end == begin) continue;
    total.add(local_terms(X.middleRows(begin, end - begin),
                          y.segment(begin, end - begin), vs, hp, basis,
                          {.hyper_gradients = false})
                  .local_neg_elbo);
  }
  total.add(global_term(vs).h);
  return total.value();
}

VariationalState optimal_q(const Eigen::Ref<const Eigen::MatrixXd>& X,
                           const Eigen::Ref<const Eigen::VectorXd>& y,
                           const HyperParams& hp, const Basis& basis) {
  const Eigen::MatrixXd Phi = basis.feature_matrix(X, hp);
  const double beta = hp.beta();
  const Eigen::Index m = basis.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  A.noalias() += beta * Phi.transpose() * Phi;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("optimal_q: I + beta Phi^T Phi not positive definite");
  const Eigen::MatrixXd Sigma = llt.solve(Eigen::MatrixXd::Identity(m, m));
  VariationalState vs;
  vs.mu = beta * (Sigma * (Phi.transpose() * y));
  const Eigen::MatrixXd Sym = 0.5 * (Sigma + Sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> sigma_llt(Sym);
  if (sigma_llt.info() != Eigen::Success)
    throw FactorizationError("optimal_q: Sigma not positive definite");
  vs.U = sigma_llt.matrixU();
  return vs;
}

}  // namespace asyncgp
