#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

#include "asyncgp/feature_map.hpp"
#include "asyncgp/kernel.hpp"
#include "asyncgp/objective.hpp"

namespace asyncgp {

/// Everything the server owns and publishes.
struct ModelParams {
  HyperParams hp;
  VariationalState vs;
  std::int64_t version = 0;
};

bool operator==(const ModelParams& a, const ModelParams& b);

enum class StepMode { Adadelta, FixedTheorem };

enum class Block : int { Mu = 0, U, LogSigma, LogA0, LogEta, Z };
inline constexpr int kNumBlocks = 6;

/// Step-size policy for the gradient part of each update.
///
/// Adadelta keeps per-coordinate running averages E[g^2], E[dx^2] and returns
///   dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g.
/// FixedTheorem returns dx = -gamma g with gamma = 1 / ((1 + tau) C + margin),
/// the largest step the bounded-delay convergence result allows.
class StepState {
 public:
  static StepState adadelta(double rho = 0.95, double eps = 1e-6);
  static StepState fixed_theorem(double lipschitz_C, std::int64_t tau,
                                 double epsilon_margin = 0.0);

  StepMode mode() const { return mode_; }
  double rho() const { return rho_; }
  double eps() const { return eps_; }
  double lipschitz_C() const { return lipschitz_C_; }
  std::int64_t tau() const { return tau_; }
  double epsilon_margin() const { return margin_; }
  /// FixedTheorem step size.
  double gamma() const;

  /// Scaled step to add to the parameter block. Updates accumulators. When
  /// `rate` is given it receives the per-coordinate factor r with
  /// step = -r * raw_grad.
  Eigen::MatrixXd scale(Block block, const Eigen::MatrixXd& raw_grad,
                        Eigen::ArrayXXd* rate = nullptr);

 private:
  StepMode mode_ = StepMode::Adadelta;
  double rho_ = 0.95;
  double eps_ = 1e-6;
  double lipschitz_C_ = 0.0;
  std::int64_t tau_ = 0;
  double margin_ = 0.0;
  std::array<Eigen::ArrayXXd, kNumBlocks> grad_sq_;
  std::array<Eigen::ArrayXXd, kNumBlocks> update_sq_;
};

Eigen::MatrixXd scale_gradient(StepState& state, Block block,
                               const Eigen::MatrixXd& raw_grad);

/// Closed-form argmin_theta h(theta) + |theta - theta'|^2 / (2 gamma):
///   mu_i = mu'_i / (1 + gamma),  U_ij = U'_ij / (1 + gamma) for i < j,
///   U_ii = (U'_ii + sqrt(U'_ii^2 + 4 (1 + gamma) gamma)) / (2 (1 + gamma)).
/// Throws std::invalid_argument for gamma <= 0.
VariationalState prox_step(const VariationalState& pre, double gamma);

/// Same operator with one gamma per coordinate (the objective is separable,
/// so each entry is solved on its own). gamma_U is read on the upper triangle.
VariationalState prox_step(const VariationalState& pre,
                           const Eigen::VectorXd& gamma_mu,
                           const Eigen::MatrixXd& gamma_U);

/// How the proximal gamma is chosen under Adadelta.
enum class ProxScale {
  /// The fixed scalar gamma_prox.
  Scalar,
  /// Each coordinate uses the step factor Adadelta just applied to it, so
  /// fixed points are stationary points of the full objective.
  Matched,
};

struct UpdateOptions {
  ProxScale prox = ProxScale::Scalar;
  /// Scalar gamma of the proximal step in Adadelta mode.
  double gamma_prox = 1e-3;
  /// Take gradient steps on the kernel/noise parameters and Z.
  bool train_hypers = true;
};

struct UpdateCounters {
  std::int64_t applied = 0;
  std::int64_t skipped_non_finite = 0;
};

/// One server iteration: gradient step on (mu, U) followed by the proximal
/// step, plain scaled gradient steps on hypers and Z. The returned version is
/// params.version + 1. A non-finite aggregate leaves the values unchanged
/// (the version still advances) and bumps counters->skipped_non_finite.
ModelParams apply_update(const ModelParams& params,
                         const LocalGradient& aggregated, StepState& steps,
                         const UpdateOptions& options,
                         UpdateCounters* counters = nullptr);

/// Heuristic upper estimate of the Lipschitz constant of the data-term
/// gradient in (mu, U): beta * lambda_max(Phi^T Phi), computed on at most
/// max_rows uniformly chosen rows and rescaled by n / rows_used.
double estimate_lipschitz(const Eigen::Ref<const Eigen::MatrixXd>& X,
                          const HyperParams& hp, const Basis& basis,
                          Eigen::Index max_rows = 20000,
                          std::uint64_t seed = 0);

}  // namespace asyncgp
