#include "asyncgp/proximal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace asyncgp {

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.version == b.version && a.hp == b.hp && a.vs == b.vs;
}

StepState StepState::adadelta(double rho, double eps) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("adadelta: rho must be in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adadelta: eps must be > 0");
  StepState s;
  s.mode_ = StepMode::Adadelta;
  s.rho_ = rho;
  s.eps_ = eps;
  return s;
}

StepState StepState::fixed_theorem(double lipschitz_C, std::int64_t tau,
                                   double epsilon_margin) {
  if (tau < 0) throw std::invalid_argument("fixed step: tau must be >= 0");
  if (!(lipschitz_C >= 0.0) || !(epsilon_margin >= 0.0) ||
      !((1.0 + static_cast<double>(tau)) * lipschitz_C + epsilon_margin > 0.0))
    throw std::invalid_argument(
        "fixed step: need C >= 0, margin >= 0 and (1+tau)C + margin > 0");
  StepState s;
  s.mode_ = StepMode::FixedTheorem;
  s.lipschitz_C_ = lipschitz_C;
  s.tau_ = tau;
  s.margin_ = epsilon_margin;
  return s;
}

double StepState::gamma() const {
  return 1.0 /
         ((1.0 + static_cast<double>(tau_)) * lipschitz_C_ + margin_);
}

Eigen::MatrixXd StepState::scale(Block block, const Eigen::MatrixXd& raw_grad,
                                 Eigen::ArrayXXd* rate) {
  if (mode_ == StepMode::FixedTheorem) {
    if (rate) rate->setConstant(raw_grad.rows(), raw_grad.cols(), gamma());
    return -gamma() * raw_grad;
  }

  const auto b = static_cast<std::size_t>(block);
  auto& eg = grad_sq_[b];
  auto& ex = update_sq_[b];
  if (eg.rows() != raw_grad.rows() || eg.cols() != raw_grad.cols()) {
    eg = Eigen::ArrayXXd::Zero(raw_grad.rows(), raw_grad.cols());
    ex = Eigen::ArrayXXd::Zero(raw_grad.rows(), raw_grad.cols());
  }
  const Eigen::ArrayXXd g = raw_grad.array();
  eg = rho_ * eg + (1.0 - rho_) * g.square();
  const Eigen::ArrayXXd r = (ex + eps_).sqrt() / (eg + eps_).sqrt();
  const Eigen::ArrayXXd step = -r * g;
  ex = rho_ * ex + (1.0 - rho_) * step.square();
  if (rate) *rate = r;
  return step.matrix();
}

Eigen::MatrixXd scale_gradient(StepState& state, Block block,
                               const Eigen::MatrixXd& raw_grad) {
  return state.scale(block, raw_grad);
}

VariationalState prox_step(const VariationalState& pre, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("prox_step: gamma must be > 0");
  const double shrink = 1.0 + gamma;
  VariationalState out;
  out.mu = pre.mu / shrink;
  const Eigen::Index m = pre.U.rows();
  out.U = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) out.U(i, j) = pre.U(i, j) / shrink;
    const double u = pre.U(j, j);
    out.U(j, j) =
        (u + std::sqrt(u * u + 4.0 * shrink * gamma)) / (2.0 * shrink);
  }
  return out;
}

VariationalState prox_step(const VariationalState& pre,
                           const Eigen::VectorXd& gamma_mu,
                           const Eigen::MatrixXd& gamma_U) {
  const Eigen::Index m = pre.U.rows();
  if (gamma_mu.size() != pre.mu.size() || gamma_U.rows() != m ||
      gamma_U.cols() != m)
    throw std::invalid_argument("prox_step: gamma shape mismatch");
  VariationalState out;
  out.mu.resize(pre.mu.size());
  for (Eigen::Index i = 0; i < pre.mu.size(); ++i) {
    if (!(gamma_mu[i] > 0.0))
      throw std::invalid_argument("prox_step: gamma must be > 0");
    out.mu[i] = pre.mu[i] / (1.0 + gamma_mu[i]);
  }
  out.U = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double g = gamma_U(i, j);
      if (!(g > 0.0)) throw std::invalid_argument("prox_step: gamma must be > 0");
      const double shrink = 1.0 + g;
      const double u = pre.U(i, j);
      out.U(i, j) = i < j ? u / shrink
                          : (u + std::sqrt(u * u + 4.0 * shrink * g)) / (2.0 * shrink);
    }
  }
  return out;
}

ModelParams apply_update(const ModelParams& params,
                         const LocalGradient& aggregated, StepState& steps,
                         const UpdateOptions& options,
                         UpdateCounters* counters) {
  ModelParams next = params;
  next.version = params.version + 1;
  if (!aggregated.all_finite()) {
    if (counters) ++counters->skipped_non_finite;
    return next;
  }

  const bool matched = steps.mode() == StepMode::Adadelta &&
                       options.prox == ProxScale::Matched;
  Eigen::ArrayXXd rate_mu, rate_U;
  VariationalState pre;
  pre.mu = params.vs.mu + steps.scale(Block::Mu, aggregated.d_mu,
                                      matched ? &rate_mu : nullptr);
  pre.U = params.vs.U;
  Eigen::MatrixXd dU = steps.scale(Block::U, aggregated.d_U,
                                   matched ? &rate_U : nullptr);
  pre.U += dU.triangularView<Eigen::Upper>().toDenseMatrix();
  if (matched)
    next.vs = prox_step(pre, rate_mu.matrix(), rate_U.matrix());
  else
    next.vs = prox_step(pre, steps.mode() == StepMode::FixedTheorem
                                 ? steps.gamma()
                                 : options.gamma_prox);

  if (options.train_hypers && aggregated.has_hyper_grad) {
    Eigen::MatrixXd g1(1, 1);
    g1(0, 0) = aggregated.d_log_sigma;
    next.hp.log_sigma += steps.scale(Block::LogSigma, g1)(0, 0);
    g1(0, 0) = aggregated.d_log_a0;
    next.hp.log_a0 += steps.scale(Block::LogA0, g1)(0, 0);
    next.hp.log_eta += steps.scale(Block::LogEta, aggregated.d_log_eta);
    next.hp.Z += steps.scale(Block::Z, aggregated.d_Z);
  }
  if (counters) ++counters->applied;
  return next;
}

double estimate_lipschitz(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const HyperParams& hp, const Basis& basis,
                          Eigen::Index max_rows, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw std::invalid_argument("estimate_lipschitz: empty data");
  Eigen::MatrixXd sample;
  if (n <= max_rows) {
    sample = X;
  } else {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    for (Eigen::Index i = 0; i < max_rows; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
      std::swap(idx[static_cast<std::size_t>(i)],
                idx[static_cast<std::size_t>(pick(rng))]);
    }
    sample.resize(max_rows, X.cols());
    for (Eigen::Index i = 0; i < max_rows; ++i)
      sample.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
  }
  const Eigen::MatrixXd Phi = basis.feature_matrix(sample, hp);
  const Eigen::MatrixXd gram = Phi.transpose() * Phi;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram,
                                                     Eigen::EigenvaluesOnly);
  const double scale =
      static_cast<double>(n) / static_cast<double>(sample.rows());
  return scale * hp.beta() * eig.eigenvalues().maxCoeff();
}

}  // namespace asyncgp
