#pragma once

// Parameter-server style training loop with a bounded-delay barrier.
//
// One logical server owns the parameters. Each worker owns a contiguous shard
// of the data and runs pull -> compute -> push. The server admits iteration t
// once every active worker has pushed a gradient computed against some
// version t_k >= t - tau, sums the latest gradient of every worker, applies
// one proximal update and publishes version t + 1.
//
// The same state machines (BarrierState, ServerCore, WorkerCore) drive the
// deterministic discrete-event simulator and the threaded runner.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asyncgp/feature_map.hpp"
#include "asyncgp/latency.hpp"
#include "asyncgp/objective.hpp"
#include "asyncgp/proximal.hpp"

namespace asyncgp {

/// tau value meaning "never wait".
inline constexpr std::int64_t kUnboundedDelay = -1;

struct ParameterSnapshot {
  std::int64_t version = 0;
  HyperParams hp;
  VariationalState vs;
  bool terminal = false;

  ModelParams params() const { return {hp, vs, version}; }
};
using SnapshotPtr = std::shared_ptr<const ParameterSnapshot>;

SnapshotPtr make_snapshot(const ModelParams& params, bool terminal = false);

struct GradientMessage {
  int worker = 0;
  std::int64_t base_version = 0;
  LocalGradient grad;
  /// Set when the worker failed to compute; grad is then meaningless.
  bool poison = false;
  std::string error;
  double compute_seconds = 0.0;
};

/// Per-worker bookkeeping for the bounded-delay admission rule.
class BarrierState {
 public:
  BarrierState(int workers, std::int64_t tau);

  int workers() const { return static_cast<int>(latest_.size()); }
  std::int64_t tau() const { return tau_; }

  /// Latest message wins.
  void record(GradientMessage msg);
  /// True when every active worker has pushed and min_k t_k >= t - tau.
  bool admits(std::int64_t t) const;
  /// Active workers that currently keep iteration t from being admitted.
  std::vector<int> blocking(std::int64_t t) const;

  void exclude(int worker);
  bool active(int worker) const { return active_[static_cast<std::size_t>(worker)]; }
  int active_count() const;

  /// -1 until the worker has pushed.
  std::int64_t last_completed(int worker) const;
  const std::optional<GradientMessage>& latest(int worker) const {
    return latest_[static_cast<std::size_t>(worker)];
  }

 private:
  std::int64_t tau_;
  std::vector<std::optional<GradientMessage>> latest_;
  std::vector<bool> active_;
};

enum class WorkerLossPolicy { ExcludeAndContinue, Abort };

struct ServerConfig {
  std::int64_t tau = 0;
  std::int64_t max_iters = 100;
  UpdateOptions update;
};

struct ServerCounters {
  UpdateCounters updates;
  /// Worker contributions dropped because they were poisoned or non-finite.
  std::int64_t dropped_contributions = 0;
  /// Iterations where no usable contribution was left.
  std::int64_t empty_iterations = 0;
  std::vector<int> excluded_workers;
};

/// What one admitted iteration used.
struct AppliedIteration {
  std::int64_t iteration = 0;  // t; the published version is t + 1
  std::vector<std::int64_t> base_versions;  // per worker, -1 when excluded
  double aggregated_local_neg_elbo = 0.0;
};

class ServerCore {
 public:
  ServerCore(ModelParams initial, StepState steps, int workers,
             ServerConfig config);

  const ModelParams& params() const { return params_; }
  SnapshotPtr snapshot() const { return snapshot_; }
  const BarrierState& barrier() const { return barrier_; }
  const ServerCounters& counters() const { return counters_; }
  const ServerConfig& config() const { return config_; }

  void receive(GradientMessage msg);
  /// Admits, aggregates, updates and publishes one iteration when the barrier
  /// allows it and some active worker pushed since the last admission.
  std::optional<AppliedIteration> try_advance();
  bool finished() const { return params_.version >= config_.max_iters; }
  void exclude(int worker);
  /// Publishes the final snapshot flagged terminal.
  SnapshotPtr finish();

 private:
  ModelParams params_;
  StepState steps_;
  BarrierState barrier_;
  ServerConfig config_;
  ServerCounters counters_;
  SnapshotPtr snapshot_;
  std::vector<bool> fresh_;  // pushed since the last admission
};

struct WorkerOptions {
  FeatureMapKind feature_map = FeatureMapKind::Cholesky;
  int ensemble_groups = 2;
  LocalTermOptions local;
  /// Pull-side filter: keep the cached value of an entry whose change since
  /// the last pull is below c / t. Disabled when unset.
  std::optional<double> pull_filter_c;
};

class WorkerCore {
 public:
  WorkerCore(int id, Eigen::MatrixXd X, Eigen::VectorXd y,
             WorkerOptions options);

  int id() const { return id_; }
  Eigen::Index rows() const { return X_.rows(); }
  /// -1 before the first pull.
  std::int64_t pulled_version() const { return version_; }
  const ModelParams& local_params() const { return local_; }

  void pull(const ParameterSnapshot& snap);
  /// local_terms on the shard against the pulled parameters. Errors become a
  /// poison message.
  GradientMessage compute() const;

 private:
  int id_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  WorkerOptions options_;
  ModelParams local_;
  std::int64_t version_ = -1;
};

// ---------------------------------------------------------------------------
// Run traces

enum class TraceAction { Pull, Push, Apply, Publish, Exclude, Fault, Terminal };

std::string_view to_string(TraceAction a);
TraceAction parse_trace_action(std::string_view s);

/// worker is -1 for server events. For Push the version is the gradient's
/// base version t_k; for Apply it is the iteration t being applied; for
/// Publish and Pull it is the snapshot version.
struct TraceEvent {
  double time = 0.0;
  int worker = -1;
  std::int64_t version = 0;
  TraceAction action = TraceAction::Pull;

  bool operator==(const TraceEvent&) const = default;
};

struct MetricRow {
  std::int64_t iteration = 0;
  double time = 0.0;
  double neg_elbo = 0.0;
  std::optional<double> rmse;
  std::optional<double> mnlp;

  bool operator==(const MetricRow&) const = default;
};

enum class RunStatus { Completed, Aborted, Deadlocked };

struct RunTrace {
  std::vector<TraceEvent> events;
  std::vector<MetricRow> metrics;
  RunStatus status = RunStatus::Completed;
  std::string message;
};

/// Line-delimited records:
///   event,virtual_time,worker,version,action
///   metric,virtual_time,iteration,neg_elbo[,rmse[,mnlp]]
void write_trace(std::ostream& out, const RunTrace& trace);
RunTrace read_trace(std::istream& in);
/// CSV with header iteration,time,neg_elbo,rmse,mnlp (empty cells when unset).
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

/// Largest t - t_k over all Apply events, recomputed from Push/Apply events.
/// Returns -1 when an Apply uses a worker that never pushed.
std::int64_t max_staleness_from_trace(const RunTrace& trace);

// ---------------------------------------------------------------------------
// Drivers

struct TrainingData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// Metric callback, invoked with the parameters after `iteration` updates.
using Evaluator = std::function<MetricRow(const ModelParams&)>;

/// neg_elbo over the full training data; no test metrics.
Evaluator neg_elbo_evaluator(const TrainingData& data, WorkerOptions options);

struct RunConfigCore {
  int workers = 4;
  std::int64_t tau = 0;
  std::int64_t max_iters = 100;
  UpdateOptions update;
  WorkerOptions worker;
  /// Record a metric row every eval_every iterations (0 = first/last only).
  std::int64_t eval_every = 0;
  WorkerLossPolicy loss_policy = WorkerLossPolicy::ExcludeAndContinue;
  /// Heartbeat timeout; <= 0 means 50x the median worker compute time.
  double heartbeat_timeout = 0.0;
  bool record_events = true;
};

struct SimulationConfig : RunConfigCore {
  LatencyModel latency;
  double server_time = 0.0;
  double comm_delay = 0.0;
  std::uint64_t seed = 0;
  /// Stop (status Completed) once virtual time would pass this.
  double time_budget = std::numeric_limits<double>::infinity();
  /// Stop at the publish of the first metric row with neg_elbo <= this.
  std::optional<double> target_neg_elbo;
};

struct ThreadedConfig : RunConfigCore {
  /// Optional sleep injected before each worker iteration (seconds).
  std::optional<LatencyModel> sleep;
};

struct RunResult {
  ModelParams final_params;
  RunTrace trace;
  ServerCounters counters;
};

/// Deterministic discrete-event execution in virtual time.
RunResult simulate(const TrainingData& data, const ModelParams& initial,
                   const StepState& steps, const SimulationConfig& config,
                   const Evaluator& evaluator);

/// Real threads: one server loop on the calling thread, one thread per worker.
RunResult run_threaded(const TrainingData& data, const ModelParams& initial,
                       const StepState& steps, const ThreadedConfig& config,
                       const Evaluator& evaluator);

/// Single-threaded synchronous proximal gradient descent: every iteration
/// sums the shard gradients in worker order and applies one update. Metric
/// rows carry time 0.
RunResult reference_run(const TrainingData& data, const ModelParams& initial,
                        const StepState& steps, const RunConfigCore& config,
                        const Evaluator& evaluator);

}  // namespace asyncgp
