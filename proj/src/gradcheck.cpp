#include "asyncgp/gradcheck.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "asyncgp/oracle.hpp"

namespace asyncgp::oracle {

Instance random_instance(std::uint64_t seed, Eigen::Index n, Eigen::Index d,
                         Eigen::Index m) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto draw = [&] { return unit(rng); };
  Instance inst;
  inst.X = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return 2.0 * draw(); });
  inst.y = Eigen::VectorXd::NullaryExpr(n, draw);
  inst.hp.log_sigma = draw();
  inst.hp.log_a0 = draw();
  inst.hp.log_eta = Eigen::VectorXd::NullaryExpr(d, draw);
  inst.hp.Z = Eigen::MatrixXd::NullaryExpr(m, d, [&] { return 2.0 * draw(); });
  inst.vs.mu = Eigen::VectorXd::NullaryExpr(m, draw);
  inst.vs.U = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j)
      inst.vs.U(i, j) = i == j ? 1.0 + 0.5 * draw() : 0.3 * draw();
  return inst;
}

double relative_error(const Eigen::Ref<const Eigen::VectorXd>& analytic,
                      const Eigen::Ref<const Eigen::VectorXd>& numeric) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-3);
}

double GradientErrors::max() const {
  return std::max({mu, U, log_sigma, log_a0, log_eta, Z});
}

GradientErrors gradient_errors(const Instance& inst, FeatureMapKind kind,
                               double step) {
  const Basis basis = build_basis(inst.hp, kind);
  const bool hyper = kind == FeatureMapKind::Cholesky;
  LocalGradient g = local_terms(inst.X, inst.y, inst.vs, inst.hp, basis,
                                LocalTermOptions{hyper});
  const GlobalTerm kl = global_term(inst.vs);
  const Eigen::VectorXd d_mu = g.d_mu + kl.d_mu;
  const Eigen::MatrixXd d_U = g.d_U + kl.d_U;

  auto objective = [&](const HyperParams& hp, const VariationalState& vs) {
    return neg_elbo(inst.X, inst.y, vs, hp, build_basis(hp, kind));
  };

  GradientErrors err;
  err.mu = relative_error(
      d_mu, finite_diff(
                [&](const Eigen::VectorXd& v) {
                  VariationalState vs = inst.vs;
                  vs.mu = v;
                  return objective(inst.hp, vs);
                },
                inst.vs.mu, step));

  const Eigen::Index m = inst.vs.dim();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> upper;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) upper.emplace_back(i, j);
  Eigen::VectorXd u0(static_cast<Eigen::Index>(upper.size()));
  Eigen::VectorXd du(u0.size());
  for (std::size_t k = 0; k < upper.size(); ++k) {
    u0(static_cast<Eigen::Index>(k)) = inst.vs.U(upper[k].first, upper[k].second);
    du(static_cast<Eigen::Index>(k)) = d_U(upper[k].first, upper[k].second);
  }
  err.U = relative_error(
      du, finite_diff(
              [&](const Eigen::VectorXd& v) {
                VariationalState vs = inst.vs;
                for (std::size_t k = 0; k < upper.size(); ++k)
                  vs.U(upper[k].first, upper[k].second) =
                      v(static_cast<Eigen::Index>(k));
                return objective(inst.hp, vs);
              },
              u0, step));

  if (!hyper) return err;

  Eigen::Vector2d s0(inst.hp.log_sigma, inst.hp.log_a0);
  const Eigen::VectorXd fs = finite_diff(
      [&](const Eigen::VectorXd& v) {
        HyperParams hp = inst.hp;
        hp.log_sigma = v(0);
        hp.log_a0 = v(1);
        return objective(hp, inst.vs);
      },
      s0, step);
  err.log_sigma = relative_error(Eigen::VectorXd::Constant(1, g.d_log_sigma),
                                 fs.head(1));
  err.log_a0 =
      relative_error(Eigen::VectorXd::Constant(1, g.d_log_a0), fs.tail(1));

  err.log_eta = relative_error(
      g.d_log_eta, finite_diff(
                       [&](const Eigen::VectorXd& v) {
                         HyperParams hp = inst.hp;
                         hp.log_eta = v;
                         return objective(hp, inst.vs);
                       },
                       inst.hp.log_eta, step));

  const Eigen::Index rows = inst.hp.Z.rows(), cols = inst.hp.Z.cols();
  const Eigen::VectorXd z0 =
      Eigen::Map<const Eigen::VectorXd>(inst.hp.Z.data(), rows * cols);
  err.Z = relative_error(
      Eigen::Map<const Eigen::VectorXd>(g.d_Z.data(), rows * cols),
      finite_diff(
          [&](const Eigen::VectorXd& v) {
            HyperParams hp = inst.hp;
            hp.Z = Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
            return objective(hp, inst.vs);
          },
          z0, step));
  return err;
}

}  // namespace asyncgp::oracle
