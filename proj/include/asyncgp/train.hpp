#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "asyncgp/coordination.hpp"
#include "asyncgp/dataset.hpp"
#include "asyncgp/model.hpp"

namespace asyncgp {

enum class ExecutionMode { Threaded, Simulated, Reference };

/// Everything a training run needs. tau = kUnboundedDelay disables the
/// staleness bound.
struct RunConfig {
  std::string train_path;
  std::string test_path;
  std::string target = "y";

  Eigen::Index m = 50;
  std::int64_t tau = 8;
  int workers = 4;
  FeatureMapKind feature_map = FeatureMapKind::Cholesky;
  int ensemble_groups = 2;
  StepMode step = StepMode::Adadelta;
  double rho = 0.95;
  double eps = 1e-6;
  /// FixedTheorem: extra margin added to (1 + tau) C.
  double step_margin = 0.0;
  double gamma_prox = 1e-3;
  ProxScale prox = ProxScale::Scalar;
  /// Defaults to on for the Cholesky map and off for the Nystrom maps.
  std::optional<bool> train_hypers;
  std::int64_t max_iters = 500;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 10;
  std::optional<double> log_sigma;
  Eigen::Index kmeans_max_rows = 10000;

  WorkerLossPolicy loss_policy = WorkerLossPolicy::ExcludeAndContinue;
  double heartbeat_timeout = 0.0;
  /// Simulator only.
  std::string latency_model = "tiers:1,2,4";
  double server_time = 0.0;
  double comm_delay = 0.0;
  double time_budget = std::numeric_limits<double>::infinity();
  std::optional<double> target_neg_elbo;

  std::string metrics_out;
  std::string model_out;

  bool hypers_trained() const;
  /// Throws std::invalid_argument with the offending field.
  void validate() const;
};

/// key = value pairs, one per line; '#' starts a comment. Keys match the
/// long CLI flags without the dashes (feature-map, gamma-prox, ...).
void apply_config_text(RunConfig& config, std::istream& in);
void apply_config_value(RunConfig& config, const std::string& key,
                        const std::string& value);
/// Same format, every key.
void write_config(std::ostream& out, const RunConfig& config);

std::string tau_to_string(std::int64_t tau);
std::int64_t parse_tau(const std::string& text);

struct TrainOutput {
  TrainedModel model;
  RunTrace trace;
  ServerCounters counters;
  std::int64_t iterations = 0;
};

/// init_state, then the chosen driver. Metric rows carry the training
/// neg_elbo and, when `test` is given, RMSE and MNLP in original units.
/// Writes config.metrics_out / config.model_out when set; the metrics
/// collected so far are flushed even when the run throws.
TrainOutput train(const Dataset& train_set, const Dataset* test_set,
                  const RunConfig& config, ExecutionMode mode);

}  // namespace asyncgp
