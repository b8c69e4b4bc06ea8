#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "asyncgp/coordination.hpp"

namespace asyncgp {

SnapshotPtr make_snapshot(const ModelParams& params, bool terminal) {
  auto snap = std::make_shared<ParameterSnapshot>();
  snap->version = params.version;
  snap->hp = params.hp;
  snap->vs = params.vs;
  snap->terminal = terminal;
  return snap;
}

// ---------------------------------------------------------------------------

BarrierState::BarrierState(int workers, std::int64_t tau)
    : tau_(tau),
      latest_(static_cast<std::size_t>(workers)),
      active_(static_cast<std::size_t>(workers), true) {
  if (workers < 1) throw std::invalid_argument("barrier: workers must be >= 1");
  if (tau < 0 && tau != kUnboundedDelay)
    throw std::invalid_argument("barrier: tau must be >= 0 or unbounded");
}

void BarrierState::record(GradientMessage msg) {
  const int k = msg.worker;
  if (k < 0 || k >= workers())
    throw std::out_of_range("barrier: unknown worker " + std::to_string(k));
  latest_[static_cast<std::size_t>(k)] = std::move(msg);
}

std::int64_t BarrierState::last_completed(int worker) const {
  const auto& msg = latest_[static_cast<std::size_t>(worker)];
  return msg ? msg->base_version : -1;
}

bool BarrierState::admits(std::int64_t t) const {
  if (active_count() == 0) return false;
  return blocking(t).empty();
}

std::vector<int> BarrierState::blocking(std::int64_t t) const {
  std::vector<int> out;
  for (int k = 0; k < workers(); ++k) {
    if (!active(k)) continue;
    const auto& msg = latest_[static_cast<std::size_t>(k)];
    if (!msg || (tau_ != kUnboundedDelay && msg->base_version < t - tau_))
      out.push_back(k);
  }
  return out;
}

void BarrierState::exclude(int worker) {
  active_[static_cast<std::size_t>(worker)] = false;
  latest_[static_cast<std::size_t>(worker)].reset();
}

int BarrierState::active_count() const {
  return static_cast<int>(std::count(active_.begin(), active_.end(), true));
}

// ---------------------------------------------------------------------------

ServerCore::ServerCore(ModelParams initial, StepState steps, int workers,
                       ServerConfig config)
    : params_(std::move(initial)),
      steps_(std::move(steps)),
      barrier_(workers, config.tau),
      config_(config),
      fresh_(static_cast<std::size_t>(workers), false) {
  if (config.max_iters < 0)
    throw std::invalid_argument("server: max_iters must be >= 0");
  params_.vs.validate();
  params_.hp.validate();
  snapshot_ = make_snapshot(params_);
}

void ServerCore::receive(GradientMessage msg) {
  if (msg.base_version > params_.version)
    throw std::logic_error("server: gradient from the future");
  if (!barrier_.active(msg.worker)) return;
  fresh_[static_cast<std::size_t>(msg.worker)] = true;
  barrier_.record(std::move(msg));
}

std::optional<AppliedIteration> ServerCore::try_advance() {
  const std::int64_t t = params_.version;
  if (finished() || !barrier_.admits(t)) return std::nullopt;
  bool any_fresh = false;
  for (int k = 0; k < barrier_.workers(); ++k)
    any_fresh = any_fresh || (barrier_.active(k) && fresh_[static_cast<std::size_t>(k)]);
  if (!any_fresh) return std::nullopt;

  AppliedIteration rec;
  rec.iteration = t;
  rec.base_versions.assign(static_cast<std::size_t>(barrier_.workers()), -1);
  std::optional<LocalGradient> sum;
  for (int k = 0; k < barrier_.workers(); ++k) {
    if (!barrier_.active(k)) continue;
    const GradientMessage& msg = *barrier_.latest(k);
    rec.base_versions[static_cast<std::size_t>(k)] = msg.base_version;
    if (msg.poison || !msg.grad.all_finite()) {
      ++counters_.dropped_contributions;
      continue;
    }
    if (!sum)
      sum = msg.grad;
    else
      *sum += msg.grad;
  }
  if (sum) {
    rec.aggregated_local_neg_elbo = sum->local_neg_elbo;
    params_ = apply_update(params_, *sum, steps_, config_.update,
                           &counters_.updates);
  } else {
    ++counters_.empty_iterations;
    ++params_.version;
  }
  snapshot_ = make_snapshot(params_);
  std::fill(fresh_.begin(), fresh_.end(), false);
  return rec;
}

void ServerCore::exclude(int worker) {
  if (!barrier_.active(worker)) return;
  barrier_.exclude(worker);
  counters_.excluded_workers.push_back(worker);
}

SnapshotPtr ServerCore::finish() {
  snapshot_ = make_snapshot(params_, true);
  return snapshot_;
}

// ---------------------------------------------------------------------------

WorkerCore::WorkerCore(int id, Eigen::MatrixXd X, Eigen::VectorXd y,
                       WorkerOptions options)
    : id_(id), X_(std::move(X)), y_(std::move(y)), options_(options) {
  if (X_.rows() == 0) throw std::invalid_argument("worker: empty shard");
}

namespace {

template <typename Derived>
void filter_entries(Eigen::MatrixBase<Derived>& cached,
                    const Eigen::MatrixBase<Derived>& incoming,
                    double threshold) {
  for (Eigen::Index j = 0; j < cached.cols(); ++j)
    for (Eigen::Index i = 0; i < cached.rows(); ++i)
      if (std::fabs(incoming(i, j) - cached(i, j)) >= threshold)
        cached(i, j) = incoming(i, j);
}

void filter_scalar(double& cached, double incoming, double threshold) {
  if (std::fabs(incoming - cached) >= threshold) cached = incoming;
}

}  // namespace

void WorkerCore::pull(const ParameterSnapshot& snap) {
  if (options_.pull_filter_c && version_ >= 0 && snap.version > 0 &&
      local_.vs.dim() == snap.vs.dim()) {
    const double threshold =
        *options_.pull_filter_c / static_cast<double>(snap.version);
    filter_scalar(local_.hp.log_sigma, snap.hp.log_sigma, threshold);
    filter_scalar(local_.hp.log_a0, snap.hp.log_a0, threshold);
    filter_entries(local_.hp.log_eta, snap.hp.log_eta, threshold);
    filter_entries(local_.hp.Z, snap.hp.Z, threshold);
    filter_entries(local_.vs.mu, snap.vs.mu, threshold);
    filter_entries(local_.vs.U, snap.vs.U, threshold);
    local_.version = snap.version;
  } else {
    local_ = snap.params();
  }
  version_ = snap.version;
}

GradientMessage WorkerCore::compute() const {
  GradientMessage msg;
  msg.worker = id_;
  msg.base_version = version_;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (version_ < 0) throw std::logic_error("worker computed before pulling");
    const Basis basis =
        build_basis(local_.hp, options_.feature_map,
                    default_jitter(local_.hp), options_.ensemble_groups);
    msg.grad = local_terms(X_, y_, local_.vs, local_.hp, basis, options_.local);
  } catch (const std::exception& e) {
    msg.poison = true;
    msg.error = e.what();
  }
  msg.compute_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return msg;
}

// ---------------------------------------------------------------------------

Evaluator neg_elbo_evaluator(const TrainingData& data, WorkerOptions options) {
  return [&data, options](const ModelParams& p) {
    const Basis basis = build_basis(p.hp, options.feature_map,
                                    default_jitter(p.hp),
                                    options.ensemble_groups);
    MetricRow row;
    row.iteration = p.version;
    row.neg_elbo = neg_elbo(data.X, data.y, p.vs, p.hp, basis);
    return row;
  };
}

RunResult reference_run(const TrainingData& data, const ModelParams& initial,
                        const StepState& steps, const RunConfigCore& config,
                        const Evaluator& evaluator) {
  if (config.workers < 1)
    throw std::invalid_argument("reference_run: workers must be >= 1");
  const auto shards = partition_rows(data.X.rows(), config.workers);
  StepState state = steps;
  RunResult result;
  ModelParams params = initial;
  auto record = [&](const ModelParams& p) {
    if (!evaluator) return;
    MetricRow row = evaluator(p);
    row.iteration = p.version;
    row.time = 0.0;
    result.trace.metrics.push_back(row);
  };
  record(params);
  const std::int64_t start = params.version;
  for (std::int64_t t = start; t < config.max_iters; ++t) {
    const Basis basis = build_basis(params.hp, config.worker.feature_map,
                                    default_jitter(params.hp),
                                    config.worker.ensemble_groups);
    std::optional<LocalGradient> sum;
    for (const auto& [begin, end] : shards) {
      LocalGradient g = local_terms(data.X.middleRows(begin, end - begin),
                                    data.y.segment(begin, end - begin),
                                    params.vs, params.hp, basis,
                                    config.worker.local);
      if (!sum)
        sum = std::move(g);
      else
        *sum += g;
    }
    params = apply_update(params, *sum, state, config.update,
                          &result.counters.updates);
    const bool last = params.version == config.max_iters;
    if (last || (config.eval_every > 0 && params.version % config.eval_every == 0))
      record(params);
  }
  result.final_params = params;
  return result;
}

}  // namespace asyncgp
