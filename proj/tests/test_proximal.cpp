#include <doctest.h>

#include <cmath>
#include <random>

#include "asyncgp/gradcheck.hpp"
#include "asyncgp/proximal.hpp"

using namespace asyncgp;

namespace {

// h restricted to one coordinate plus the quadratic coupling, minimized by
// golden-section search.
double numeric_prox_1d(double pre, double gamma, bool diagonal) {
  auto f = [&](double v) {
    const double h = diagonal ? 0.5 * v * v - std::log(v) : 0.5 * v * v;
    return h + (v - pre) * (v - pre) / (2.0 * gamma);
  };
  double lo = diagonal ? 1e-12 : -1e3, hi = 1e3;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  for (int i = 0; i < 400; ++i) {
    if (f(a) < f(b)) {
      hi = b;
      b = a;
      a = hi - g * (hi - lo);
    } else {
      lo = a;
      a = b;
      b = lo + g * (hi - lo);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("first Adadelta step") {
  StepState s = StepState::adadelta(0.95, 1e-6);
  const Eigen::MatrixXd step = s.scale(Block::Mu, Eigen::MatrixXd::Constant(1, 1, 1.0));
  CHECK(step(0, 0) == doctest::Approx(-4.4721e-3).epsilon(1e-4));
  CHECK(step(0, 0) == doctest::Approx(-std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6)));
}

TEST_CASE("Adadelta keeps separate accumulators per block") {
  StepState s = StepState::adadelta();
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(2, 1, 1.0);
  const Eigen::MatrixXd a = s.scale(Block::Mu, g);
  const Eigen::MatrixXd b = s.scale(Block::LogEta, g);
  CHECK(a == b);
  const Eigen::MatrixXd c = s.scale(Block::Mu, g);
  CHECK(c(0, 0) != a(0, 0));
  Eigen::ArrayXXd rate;
  const Eigen::MatrixXd d = s.scale(Block::Z, g, &rate);
  CHECK((d.array() + rate * g.array()).abs().maxCoeff() == 0.0);
}

TEST_CASE("fixed theorem step size") {
  StepState s = StepState::fixed_theorem(10.0, 4, 2.0);
  CHECK(s.gamma() == doctest::Approx(1.0 / 52.0));
  const Eigen::MatrixXd step = s.scale(Block::U, Eigen::MatrixXd::Constant(1, 2, 2.0));
  CHECK(step(0, 1) == doctest::Approx(-2.0 / 52.0));
}

TEST_CASE("closed-form prox matches a numeric minimizer") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> val(-3.0, 3.0), lg(-4.0, 1.0);
  for (int draw = 0; draw < 100; ++draw) {
    VariationalState pre;
    pre.mu = Eigen::VectorXd::NullaryExpr(3, [&] { return val(rng); });
    pre.U = Eigen::MatrixXd::NullaryExpr(3, 3, [&] { return val(rng); });
    pre.U = pre.U.triangularView<Eigen::Upper>();
    const double gamma = std::pow(10.0, lg(rng));
    const VariationalState out = prox_step(pre, gamma);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(out.mu(i) == doctest::Approx(numeric_prox_1d(pre.mu(i), gamma, false)).epsilon(1e-6));
      CHECK(out.U(i, i) > 0.0);
      for (Eigen::Index j = i; j < 3; ++j)
        CHECK(out.U(i, j) ==
              doctest::Approx(numeric_prox_1d(pre.U(i, j), gamma, i == j)).epsilon(1e-6));
    }
    CHECK(out.U.triangularView<Eigen::StrictlyLower>().toDenseMatrix().isZero(0.0));
  }
  CHECK_THROWS_AS(prox_step(VariationalState::prior(2), 0.0), std::invalid_argument);
}

TEST_CASE("per-coordinate prox reduces to the scalar one") {
  VariationalState pre;
  pre.mu = Eigen::Vector2d(0.7, -1.1);
  pre.U = Eigen::Matrix2d::Identity();
  pre.U(0, 1) = 0.4;
  pre.U(1, 1) = -0.2;
  const VariationalState a = prox_step(pre, 0.3);
  const VariationalState b =
      prox_step(pre, Eigen::Vector2d::Constant(0.3), Eigen::Matrix2d::Constant(0.3));
  CHECK(a == b);
  CHECK(b.U(1, 1) > 0.0);
}

TEST_CASE("zero gradient update only applies the prox") {
  const auto inst = oracle::random_instance(0, 5, 2, 3);
  ModelParams p{inst.hp, inst.vs, 4};
  StepState s = StepState::adadelta();
  UpdateOptions opt;
  opt.gamma_prox = 0.1;
  UpdateCounters counters;
  const LocalGradient zero = LocalGradient::zeros(3, 3, 2);
  const ModelParams next = apply_update(p, zero, s, opt, &counters);
  CHECK(next.version == 5);
  CHECK(next.vs.mu.isApprox(inst.vs.mu / 1.1));
  CHECK(next.hp == inst.hp);
  CHECK(counters.applied == 1);
}

TEST_CASE("non-finite aggregate is skipped but the version advances") {
  const auto inst = oracle::random_instance(0, 5, 2, 3);
  ModelParams p{inst.hp, inst.vs, 0};
  StepState s = StepState::adadelta();
  UpdateCounters counters;
  LocalGradient g = LocalGradient::zeros(3, 3, 2);
  g.d_mu(1) = NAN;
  const ModelParams next = apply_update(p, g, s, {}, &counters);
  CHECK(next.version == 1);
  CHECK(next.vs == inst.vs);
  CHECK(counters.skipped_non_finite == 1);
}

TEST_CASE("hypers stay fixed when not trained") {
  const auto inst = oracle::random_instance(1, 5, 2, 3);
  ModelParams p{inst.hp, inst.vs, 0};
  StepState s = StepState::adadelta();
  LocalGradient g = LocalGradient::zeros(3, 3, 2);
  g.d_log_sigma = 1.0;
  g.d_Z.setOnes();
  g.has_hyper_grad = true;
  UpdateOptions opt;
  opt.train_hypers = false;
  CHECK(apply_update(p, g, s, opt).hp == inst.hp);
  opt.train_hypers = true;
  StepState s2 = StepState::adadelta();
  const ModelParams moved = apply_update(p, g, s2, opt);
  CHECK(moved.hp.log_sigma < inst.hp.log_sigma);
  CHECK((moved.hp.Z.array() < inst.hp.Z.array()).all());
}

TEST_CASE("Lipschitz estimate bounds the curvature of the data term") {
  const auto inst = oracle::random_instance(9, 40, 2, 4);
  const Basis b = build_basis(inst.hp, FeatureMapKind::Cholesky);
  const double C = estimate_lipschitz(inst.X, inst.hp, b);
  const Eigen::MatrixXd Phi = b.feature_matrix(inst.X, inst.hp);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Phi.transpose() * Phi);
  CHECK(C == doctest::Approx(inst.hp.beta() * eig.eigenvalues().maxCoeff()).epsilon(1e-9));
  // subsampling rescales
  const double Cs = estimate_lipschitz(inst.X, inst.hp, b, 20, 3);
  CHECK(Cs > 0.0);
}
