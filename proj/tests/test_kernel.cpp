#include <doctest.h>

#include <cmath>

#include "asyncgp/kernel.hpp"
#include "asyncgp/oracle.hpp"

using namespace asyncgp;

namespace {

HyperParams sample_hypers() {
  HyperParams hp;
  hp.log_sigma = -0.3;
  hp.log_a0 = 0.4;
  hp.log_eta = Eigen::Vector3d(0.2, -0.5, 1.0);
  hp.Z = Eigen::MatrixXd::Random(5, 3);
  return hp;
}

}  // namespace

TEST_CASE("kernel at zero distance is the signal variance") {
  const HyperParams hp = sample_hypers();
  const Eigen::Vector3d x(0.3, -1.2, 0.8);
  CHECK(ard_kernel(x, x, hp) == doctest::Approx(std::exp(0.8)));
  CHECK(hp.signal_variance() == doctest::Approx(std::exp(0.8)));
  CHECK(hp.beta() == doctest::Approx(std::exp(0.6)));
}

TEST_CASE("kernel matches the closed form") {
  HyperParams hp = sample_hypers();
  hp.log_a0 = 0.0;
  hp.log_eta = Eigen::Vector3d::Zero();
  const Eigen::Vector3d a(1, 0, 0), b(0, 0, 0);
  CHECK(ard_kernel(a, b, hp) == doctest::Approx(std::exp(-0.5)));
  hp.log_eta(0) = std::log(4.0);
  CHECK(ard_kernel(a, b, hp) == doctest::Approx(std::exp(-2.0)));
  // a dimension with eta -> 0 stops mattering
  hp.log_eta(0) = -60.0;
  CHECK(ard_kernel(a, b, hp) == doctest::Approx(1.0));
}

TEST_CASE("kernel matrix is symmetric and agrees with the pointwise kernel") {
  const HyperParams hp = sample_hypers();
  const Eigen::MatrixXd A = Eigen::MatrixXd::Random(6, 3);
  const Eigen::MatrixXd K = kernel_matrix(A, A, hp);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j)
      CHECK(K(i, j) == doctest::Approx(ard_kernel(A.row(i).transpose(),
                                                  A.row(j).transpose(), hp)));
  CHECK((kernel_diag(A, hp) - K.diagonal()).cwiseAbs().maxCoeff() < 1e-14);
  // positive semidefinite
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("cross_kernel_row equals kernel_matrix against Z") {
  const HyperParams hp = sample_hypers();
  const Eigen::Vector3d x(0.1, 0.2, -0.4);
  Eigen::VectorXd row(hp.num_inducing());
  cross_kernel_row(x, hp.Z, hp.eta(), hp.signal_variance(), row);
  const Eigen::MatrixXd K = kernel_matrix(x.transpose(), hp.Z, hp);
  CHECK((row - K.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kernel gradient in x matches finite differences") {
  const HyperParams hp = sample_hypers();
  const Eigen::Vector3d x(0.3, -0.1, 0.5), z(-0.2, 0.4, 0.0);
  const auto fd = oracle::finite_diff(
      [&](const Eigen::VectorXd& p) { return ard_kernel(p, z, hp); }, x);
  const Eigen::Vector3d analytic =
      -ard_kernel(x, z, hp) * hp.eta().cwiseProduct(x - z);
  CHECK((fd - analytic).norm() < 1e-9);
}

TEST_CASE("hyperparameter validation") {
  HyperParams hp = sample_hypers();
  CHECK_NOTHROW(hp.validate());
  hp.log_eta(1) = NAN;
  CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
  hp = sample_hypers();
  hp.Z = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
  const HyperParams d = HyperParams::defaults(3, Eigen::MatrixXd::Zero(2, 3));
  CHECK(d.log_eta.size() == 3);
  CHECK(d == d);
}
