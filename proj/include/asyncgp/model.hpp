#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "asyncgp/dataset.hpp"
#include "asyncgp/feature_map.hpp"
#include "asyncgp/kernel.hpp"
#include "asyncgp/objective.hpp"
#include "asyncgp/proximal.hpp"

namespace asyncgp {

struct InitOptions {
  Eigen::Index m = 50;
  std::uint64_t seed = 0;
  Eigen::Index kmeans_max_rows = 10000;
  /// Overrides ln(std(y) / sqrt(2)).
  std::optional<double> log_sigma;
};

/// mu = 0, U = I, ln a0 = 0, ln eta = 0, ln sigma = ln(std(y) / sqrt(2)),
/// Z from k-means on the (standardized) inputs. Version 0.
ModelParams init_state(const Dataset& train, const InitOptions& options);

/// Everything needed to predict in original units.
struct TrainedModel {
  HyperParams hp;
  VariationalState vs;
  FeatureMapKind feature_map = FeatureMapKind::Cholesky;
  int ensemble_groups = 2;
  Standardization standardization;
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Basis basis() const;
};

bool operator==(const TrainedModel& a, const TrainedModel& b);

struct Predictions {
  Eigen::VectorXd mean_f;
  Eigen::VectorXd var_f;  // clamped at 0
  Eigen::VectorXd var_y;  // var_f + 1 / beta
};

/// mean_f = phi^T mu, var_f = k(x,x) - |phi|^2 + phi^T Sigma phi, in the
/// units of the inputs given (no standardization).
Predictions predict(const Eigen::Ref<const Eigen::MatrixXd>& Xs,
                    const VariationalState& vs, const HyperParams& hp,
                    const Basis& basis);

/// Raw inputs in, original target units out.
Predictions predict(const TrainedModel& model,
                    const Eigen::Ref<const Eigen::MatrixXd>& X_raw);

struct Metrics {
  double rmse = 0.0;
  double mnlp = 0.0;
};

/// RMSE and mean -log N(y | mean, var) over the rows.
Metrics score(const Eigen::Ref<const Eigen::VectorXd>& y,
              const Eigen::Ref<const Eigen::VectorXd>& mean,
              const Eigen::Ref<const Eigen::VectorXd>& var);

/// Scores on a standardized test set, in original target units (the test
/// set's own standardization is undone first).
Metrics evaluate(const Dataset& test, const TrainedModel& model);
Metrics evaluate_standardized(const Dataset& test, const VariationalState& vs,
                              const HyperParams& hp, const Basis& basis,
                              const Standardization& train_map);

struct BaselineScores {
  double mean_prediction_rmse = 0.0;
  double linear_regression_rmse = 0.0;
};

/// Training-target mean and least squares with intercept (ridge 1e-8), both
/// scored on the test set in original units.
BaselineScores baselines(const Dataset& train, const Dataset& test);

/// Text artifact, doubles in hexfloat so reloading is exact.
void save_model(std::ostream& out, const TrainedModel& model);
TrainedModel load_model(std::istream& in);
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

}  // namespace asyncgp
