#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "asyncgp/coordination.hpp"

namespace asyncgp {

namespace {

using Clock = std::chrono::steady_clock;

// Lower bound on the derived heartbeat timeout. Compute times of a few
// milliseconds would otherwise make a scheduler hiccup look like a lost worker.
constexpr double kMinHeartbeatSeconds = 0.5;
// Used before any worker has reported a compute time.
constexpr double kFirstReportSeconds = 60.0;

class SnapshotBoard {
 public:
  explicit SnapshotBoard(SnapshotPtr s) : snap_(std::move(s)) {}

  void publish(SnapshotPtr s) {
    {
      std::lock_guard lock(m_);
      snap_ = std::move(s);
    }
    cv_.notify_all();
  }

  /// Blocks until a snapshot newer than `version` or a terminal one is out.
  SnapshotPtr wait_newer(std::int64_t version) {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return snap_->terminal || snap_->version > version; });
    return snap_;
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  SnapshotPtr snap_;
};

class Mailbox {
 public:
  void push(GradientMessage msg) {
    {
      std::lock_guard lock(m_);
      queue_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  std::optional<GradientMessage> pop_until(Clock::time_point deadline) {
    std::unique_lock lock(m_);
    if (!cv_.wait_until(lock, deadline, [&] { return !queue_.empty(); }))
      return std::nullopt;
    GradientMessage msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::deque<GradientMessage> queue_;
};

class EventLog {
 public:
  EventLog(Clock::time_point start, bool enabled)
      : start_(start), enabled_(enabled) {}

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

  void add(int worker, std::int64_t version, TraceAction action) {
    if (!enabled_) return;
    std::lock_guard lock(m_);
    events_.push_back({elapsed(), worker, version, action});
  }

  std::vector<TraceEvent> take() {
    std::lock_guard lock(m_);
    return std::move(events_);
  }

 private:
  Clock::time_point start_;
  bool enabled_;
  std::mutex m_;
  std::vector<TraceEvent> events_;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RunResult run_threaded(const TrainingData& data, const ModelParams& initial,
                       const StepState& steps, const ThreadedConfig& config,
                       const Evaluator& evaluator) {
  if (config.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (config.tau < 0 && config.tau != kUnboundedDelay)
    throw std::invalid_argument("tau must be >= 0 or unbounded");
  if (data.X.rows() < config.workers)
    throw std::invalid_argument("fewer training rows than workers");

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

  const auto start = Clock::now();
  EventLog log(start, config.record_events);
  SnapshotBoard board(server.snapshot());
  Mailbox mailbox;
  std::vector<std::atomic<bool>> dropped(static_cast<std::size_t>(r));
  for (auto& d : dropped) d = false;

  auto record_metric = [&](const ModelParams& p) {
    if (!evaluator) return;
    MetricRow row = evaluator(p);
    row.iteration = p.version;
    row.time = log.elapsed();
    trace.metrics.push_back(row);
  };

  log.add(-1, 0, TraceAction::Publish);
  record_metric(server.params());

  auto worker_loop = [&](int k) {
    WorkerCore& w = workers[static_cast<std::size_t>(k)];
    std::int64_t iter = 0;
    while (true) {
      SnapshotPtr snap = board.wait_newer(w.pulled_version());
      if (snap->terminal || dropped[static_cast<std::size_t>(k)]) return;
      w.pull(*snap);
      log.add(k, snap->version, TraceAction::Pull);
      const auto t0 = Clock::now();
      if (config.sleep) {
        const double dt = config.sleep->compute_time(k, iter);
        if (!std::isfinite(dt)) {
          board.wait_newer(std::numeric_limits<std::int64_t>::max());
          return;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(dt));
      }
      ++iter;
      GradientMessage msg = w.compute();
      msg.compute_seconds =
          std::chrono::duration<double>(Clock::now() - t0).count();
      if (msg.poison) log.add(k, msg.base_version, TraceAction::Fault);
      mailbox.push(std::move(msg));
    }
  };

  std::vector<double> durations;
  std::vector<Clock::time_point> last_seen(static_cast<std::size_t>(r), start);
  {
    std::vector<std::jthread> threads;
    if (!server.finished())
      for (int k = 0; k < r; ++k) threads.emplace_back(worker_loop, k);

    auto timeout = [&] {
      if (config.heartbeat_timeout > 0.0) return config.heartbeat_timeout;
      if (durations.empty()) return kFirstReportSeconds;
      return std::max(kMinHeartbeatSeconds, 50.0 * median(durations));
    };

    auto advance = [&] {
      auto rec = server.try_advance();
      if (!rec) return;
      log.add(-1, rec->iteration, TraceAction::Apply);
      const auto& p = server.params();
      if (server.finished() ||
          (config.eval_every > 0 && p.version % config.eval_every == 0))
        record_metric(p);
      if (!server.finished()) {
        board.publish(server.snapshot());
        log.add(-1, p.version, TraceAction::Publish);
      }
    };

    while (!server.finished()) {
      const double limit = timeout();
      const double wait = std::isfinite(limit) ? std::min(0.05, limit / 4) : 0.05;
      auto msg = mailbox.pop_until(Clock::now() +
                                   std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>(wait)));
      if (msg) {
        const int k = msg->worker;
        if (server.barrier().active(k)) {
          last_seen[static_cast<std::size_t>(k)] = Clock::now();
          durations.push_back(msg->compute_seconds);
          log.add(k, msg->base_version, TraceAction::Push);
          server.receive(std::move(*msg));
          advance();
        }
        continue;
      }

      const double limit_now = timeout();
      bool stop = false;
      for (int k : server.barrier().blocking(server.params().version)) {
        const double silent = std::chrono::duration<double>(
                                  Clock::now() - last_seen[static_cast<std::size_t>(k)])
                                  .count();
        if (silent < limit_now) continue;
        if (config.loss_policy == WorkerLossPolicy::Abort) {
          trace.status = RunStatus::Aborted;
          trace.message =
              "worker " + std::to_string(k) + " missed its heartbeat";
          stop = true;
          break;
        }
        server.exclude(k);
        dropped[static_cast<std::size_t>(k)] = true;
        log.add(k, server.params().version, TraceAction::Exclude);
      }
      if (!stop && server.barrier().active_count() == 0) {
        trace.status = RunStatus::Aborted;
        trace.message = "every worker was excluded";
        stop = true;
      }
      if (stop) break;
      advance();
    }
    const auto final_snap = server.finish();
    log.add(-1, final_snap->version, TraceAction::Publish);
    board.publish(final_snap);
    log.add(-1, final_snap->version, TraceAction::Terminal);
  }
  if (!server.finished()) record_metric(server.params());

  trace.events = log.take();
  result.final_params = server.params();
  result.counters = server.counters();
  return result;
}

}  // namespace asyncgp
