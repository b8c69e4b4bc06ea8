#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <stdexcept>

#include "asyncgp/coordination.hpp"

namespace asyncgp {

namespace {

enum class EventType { WorkerDone, Arrive, Publish, Heartbeat };

struct Event {
  double time;
  std::uint64_t seq;
  EventType type;
  int worker;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

void check_config(const RunConfigCore& config, Eigen::Index rows) {
  if (config.workers < 1)
    throw std::invalid_argument("workers must be >= 1");
  if (config.tau < 0 && config.tau != kUnboundedDelay)
    throw std::invalid_argument("tau must be >= 0 or unbounded");
  if (config.max_iters < 0)
    throw std::invalid_argument("max_iters must be >= 0");
  if (rows < config.workers)
    throw std::invalid_argument("fewer training rows than workers");
}

}  // namespace

RunResult simulate(const TrainingData& data, const ModelParams& initial,
                   const StepState& steps, const SimulationConfig& config,
                   const Evaluator& evaluator) {
  check_config(config, data.X.rows());
  if (config.server_time < 0.0 || config.comm_delay < 0.0)
    throw std::invalid_argument("server_time and comm_delay must be >= 0");
  if (!(config.time_budget > 0.0))
    throw std::invalid_argument("time_budget must be > 0");

  const int r = config.workers;
  std::vector<WorkerCore> workers;
  for (const auto& [begin, end] : partition_rows(data.X.rows(), r))
    workers.emplace_back(static_cast<int>(workers.size()),
                         data.X.middleRows(begin, end - begin),
                         data.y.segment(begin, end - begin), config.worker);

  ServerCore server(initial, steps, r,
                    ServerConfig{config.tau, config.max_iters, config.update});
  RunResult result;
  RunTrace& trace = result.trace;

  const double timeout = config.heartbeat_timeout > 0.0
                             ? config.heartbeat_timeout
                             : 50.0 * config.latency.median_nominal(r);

  std::priority_queue<Event, std::vector<Event>, Later> queue;
  std::uint64_t seq = 0;
  double now = 0.0;
  auto schedule = [&](double at, EventType type, int worker) {
    queue.push(Event{at, seq++, type, worker});
  };
  auto log = [&](double at, int worker, std::int64_t version, TraceAction a) {
    if (config.record_events) trace.events.push_back({at, worker, version, a});
  };
  bool target_hit = false;
  bool out_of_time = false;
  auto record_metric = [&](const ModelParams& p, double at) {
    if (!evaluator) return;
    MetricRow row = evaluator(p);
    row.iteration = p.version;
    row.time = at;
    trace.metrics.push_back(row);
    if (config.target_neg_elbo && row.neg_elbo <= *config.target_neg_elbo)
      target_hit = true;
  };

  std::vector<std::deque<GradientMessage>> in_flight(static_cast<std::size_t>(r));
  std::vector<bool> busy(static_cast<std::size_t>(r), false);
  std::vector<std::int64_t> local_iter(static_cast<std::size_t>(r), 0);
  std::vector<double> last_seen(static_cast<std::size_t>(r), 0.0);
  std::vector<double> heartbeat_at(static_cast<std::size_t>(r), -1.0);
  SnapshotPtr published = server.snapshot();
  bool server_busy = false;
  bool stop = false;

  auto start_work = [&](int k) {
    const auto ku = static_cast<std::size_t>(k);
    if (!server.barrier().active(k)) return;
    workers[ku].pull(*published);
    log(now, k, published->version, TraceAction::Pull);
    const double dt = config.latency.compute_time(k, local_iter[ku]++);
    busy[ku] = true;
    if (std::isfinite(dt)) schedule(now + dt, EventType::WorkerDone, k);
  };

  auto maybe_advance = [&] {
    if (server_busy || server.finished()) return;
    const std::int64_t t = server.params().version;
    if (auto rec = server.try_advance()) {
      log(now, -1, rec->iteration, TraceAction::Apply);
      server_busy = true;
      const double done = now + config.server_time;
      const auto& p = server.params();
      const bool last = server.finished();
      if (last || (config.eval_every > 0 && p.version % config.eval_every == 0))
        record_metric(p, done);
      schedule(done, EventType::Publish, -1);
      return;
    }
    for (int k : server.barrier().blocking(t)) {
      const auto ku = static_cast<std::size_t>(k);
      const double due = last_seen[ku] + timeout;
      if (heartbeat_at[ku] < due) {
        heartbeat_at[ku] = due;
        schedule(std::max(now, due), EventType::Heartbeat, k);
      }
    }
  };

  log(0.0, -1, published->version, TraceAction::Publish);
  record_metric(server.params(), 0.0);
  if (server.finished() || target_hit) stop = true;
  for (int k = 0; k < r && !stop; ++k) start_work(k);
  if (!stop) maybe_advance();  // arms heartbeats for workers that never report

  while (!stop && !queue.empty()) {
    const Event ev = queue.top();
    if (ev.time > config.time_budget) {
      out_of_time = true;
      break;
    }
    queue.pop();
    now = ev.time;
    const auto ku = static_cast<std::size_t>(ev.worker);
    switch (ev.type) {
      case EventType::WorkerDone: {
        busy[ku] = false;
        if (!server.barrier().active(ev.worker)) break;
        GradientMessage msg = workers[ku].compute();
        msg.compute_seconds = 0.0;  // keep the trace a function of the seed
        if (msg.poison) log(now, ev.worker, msg.base_version, TraceAction::Fault);
        in_flight[ku].push_back(std::move(msg));
        schedule(now + config.comm_delay, EventType::Arrive, ev.worker);
        if (published->version > workers[ku].pulled_version())
          start_work(ev.worker);
        break;
      }
      case EventType::Arrive: {
        GradientMessage msg = std::move(in_flight[ku].front());
        in_flight[ku].pop_front();
        if (!server.barrier().active(ev.worker)) break;
        last_seen[ku] = now;
        log(now, ev.worker, msg.base_version, TraceAction::Push);
        server.receive(std::move(msg));
        maybe_advance();
        break;
      }
      case EventType::Publish: {
        server_busy = false;
        published = server.snapshot();
        log(now, -1, published->version, TraceAction::Publish);
        if (server.finished() || target_hit) {
          stop = true;
          break;
        }
        for (int k = 0; k < r; ++k)
          if (!busy[static_cast<std::size_t>(k)] &&
              workers[static_cast<std::size_t>(k)].pulled_version() <
                  published->version)
            start_work(k);
        maybe_advance();
        break;
      }
      case EventType::Heartbeat: {
        if (server.finished() || server_busy ||
            !server.barrier().active(ev.worker))
          break;
        const auto blocking = server.barrier().blocking(server.params().version);
        if (std::find(blocking.begin(), blocking.end(), ev.worker) ==
            blocking.end())
          break;
        if (now - last_seen[ku] < timeout) {
          maybe_advance();  // reschedules the check
          break;
        }
        if (config.loss_policy == WorkerLossPolicy::Abort) {
          trace.status = RunStatus::Aborted;
          trace.message = "worker " + std::to_string(ev.worker) +
                          " missed its heartbeat";
          stop = true;
          break;
        }
        server.exclude(ev.worker);
        log(now, ev.worker, server.params().version, TraceAction::Exclude);
        if (server.barrier().active_count() == 0) {
          trace.status = RunStatus::Aborted;
          trace.message = "every worker was excluded";
          stop = true;
          break;
        }
        maybe_advance();
        break;
      }
    }
  }

  const bool early = target_hit || out_of_time;
  if (target_hit)
    trace.message = "target reached at version " +
                    std::to_string(server.params().version);
  else if (out_of_time)
    trace.message = "time budget reached at version " +
                    std::to_string(server.params().version);
  if (trace.status == RunStatus::Completed && !server.finished() && !early) {
    trace.status = RunStatus::Deadlocked;
    trace.message = "no pending events at version " +
                    std::to_string(server.params().version);
  }
  const bool unrecorded =
      !server.finished() && !target_hit &&
      (trace.metrics.empty() || trace.metrics.back().iteration != server.params().version);
  const auto final_snap = server.finish();
  log(now, -1, final_snap->version, TraceAction::Terminal);
  if (unrecorded && evaluator) record_metric(server.params(), now);

  result.final_params = server.params();
  result.counters = server.counters();
  return result;
}

}  // namespace asyncgp
