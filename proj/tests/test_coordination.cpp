#include <doctest.h>

#include <sstream>

#include "asyncgp/coordination.hpp"
#include "asyncgp/dataset.hpp"
#include "asyncgp/model.hpp"

using namespace asyncgp;

namespace {

struct Problem {
  TrainingData data;
  ModelParams init;
};

Problem small_problem(Eigen::Index n = 400, Eigen::Index m = 8) {
  const auto raw = synthetic_data(n, 2, 0.1, 5, SyntheticKind::Nonlinear);
  const Dataset ds = make_dataset(raw.X, raw.y);
  InitOptions io;
  io.m = m;
  io.seed = 2;
  return {{ds.X, ds.y}, init_state(ds, io)};
}

GradientMessage message(int worker, std::int64_t base) {
  GradientMessage msg;
  msg.worker = worker;
  msg.base_version = base;
  msg.grad = LocalGradient::zeros(2, 2, 1);
  return msg;
}

SimulationConfig sim_config(std::int64_t tau, std::int64_t iters,
                            const std::string& latency = "tiers:1,2,4",
                            int workers = 4) {
  SimulationConfig c;
  c.workers = workers;
  c.tau = tau;
  c.max_iters = iters;
  c.eval_every = 5;
  c.latency = LatencyModel::parse(latency, workers, 11);
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("barrier admits only inside the staleness window") {
  BarrierState b(2, 1);
  CHECK_FALSE(b.admits(0));
  b.record(message(0, 0));
  CHECK(b.blocking(0) == std::vector<int>{1});
  b.record(message(1, 0));
  CHECK(b.admits(0));
  CHECK(b.admits(1));
  CHECK_FALSE(b.admits(2));  // t - tau = 1 > 0
  b.record(message(0, 2));
  CHECK(b.blocking(3) == std::vector<int>{1});
  b.exclude(1);
  CHECK(b.admits(3));
  CHECK(b.active_count() == 1);
  CHECK(b.last_completed(1) == -1);
  b.exclude(0);
  CHECK_FALSE(b.admits(0));

  BarrierState open(1, kUnboundedDelay);
  open.record(message(0, 0));
  CHECK(open.admits(1000));
  CHECK_THROWS(BarrierState(0, 1));
  CHECK_THROWS(BarrierState(2, -5));
}

TEST_CASE("server needs a fresh push for every iteration") {
  const Problem p = small_problem(40, 3);
  ServerConfig sc;
  sc.tau = 4;
  sc.max_iters = 10;
  ServerCore server(p.init, StepState::adadelta(), 2, sc);
  WorkerCore w0(0, p.data.X.topRows(20), p.data.y.head(20), {});
  WorkerCore w1(1, p.data.X.bottomRows(20), p.data.y.tail(20), {});
  w0.pull(*server.snapshot());
  w1.pull(*server.snapshot());
  server.receive(w0.compute());
  CHECK_FALSE(server.try_advance());
  server.receive(w1.compute());
  const auto rec = server.try_advance();
  REQUIRE(rec);
  CHECK(rec->iteration == 0);
  CHECK(rec->base_versions == std::vector<std::int64_t>{0, 0});
  CHECK(server.params().version == 1);
  // nothing new arrived: the same gradients are not applied twice
  CHECK_FALSE(server.try_advance());
  server.receive(w0.compute());  // still based on version 0, within tau
  CHECK(server.try_advance());
  CHECK(server.params().version == 2);

  GradientMessage future = w0.compute();
  future.base_version = 99;
  CHECK_THROWS_AS(server.receive(future), std::logic_error);
}

TEST_CASE("poisoned and non-finite contributions are dropped") {
  const Problem p = small_problem(40, 3);
  ServerConfig sc;
  sc.max_iters = 5;
  ServerCore server(p.init, StepState::adadelta(), 2, sc);
  Eigen::MatrixXd bad = p.data.X.bottomRows(20);
  bad(3, 0) = NAN;
  WorkerCore good(0, p.data.X.topRows(20), p.data.y.head(20), {});
  WorkerCore broken(1, bad, p.data.y.tail(20), {});
  good.pull(*server.snapshot());
  broken.pull(*server.snapshot());
  const GradientMessage msg = broken.compute();
  CHECK(msg.poison);
  CHECK_FALSE(msg.error.empty());
  server.receive(good.compute());
  server.receive(msg);
  REQUIRE(server.try_advance());
  CHECK(server.counters().dropped_contributions == 1);
  CHECK(server.counters().updates.applied == 1);

  // only poison left: the version still advances
  ServerCore lonely(p.init, StepState::adadelta(), 1, sc);
  WorkerCore only(0, bad, p.data.y.tail(20), {});
  only.pull(*lonely.snapshot());
  lonely.receive(only.compute());
  REQUIRE(lonely.try_advance());
  CHECK(lonely.params().version == 1);
  CHECK(lonely.params().vs == p.init.vs);
  CHECK(lonely.counters().empty_iterations == 1);
}

TEST_CASE("tau = 0 simulation equals the synchronous reference bit for bit") {
  const Problem p = small_problem();
  SimulationConfig c = sim_config(0, 40);
  const Evaluator eval = neg_elbo_evaluator(p.data, c.worker);
  const RunResult sim = simulate(p.data, p.init, StepState::adadelta(), c, eval);
  const RunResult ref = reference_run(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(sim.trace.status == RunStatus::Completed);
  CHECK(sim.final_params == ref.final_params);
  REQUIRE(sim.trace.metrics.size() == ref.trace.metrics.size());
  for (std::size_t i = 0; i < sim.trace.metrics.size(); ++i) {
    CHECK(sim.trace.metrics[i].iteration == ref.trace.metrics[i].iteration);
    CHECK(sim.trace.metrics[i].neg_elbo == ref.trace.metrics[i].neg_elbo);
  }
  CHECK(max_staleness_from_trace(sim.trace) == 0);
}

TEST_CASE("simulation is a pure function of its inputs") {
  const Problem p = small_problem();
  const SimulationConfig c = sim_config(3, 30, "tiers:1,3,7;jitter=0.3");
  const Evaluator eval = neg_elbo_evaluator(p.data, c.worker);
  const RunResult a = simulate(p.data, p.init, StepState::adadelta(), c, eval);
  const RunResult b = simulate(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(a.final_params == b.final_params);
  CHECK(a.trace.events == b.trace.events);
  CHECK(a.trace.metrics == b.trace.metrics);
}

TEST_CASE("staleness never exceeds tau") {
  const Problem p = small_problem();
  for (std::int64_t tau : {1, 2, 5}) {
    CAPTURE(tau);
    const SimulationConfig c = sim_config(tau, 80, "tiers:1,4,9;jitter=0.2");
    const RunResult r = simulate(p.data, p.init, StepState::adadelta(), c, {});
    CHECK(r.trace.status == RunStatus::Completed);
    CHECK(r.final_params.version == 80);
    const auto s = max_staleness_from_trace(r.trace);
    CHECK(s >= 0);
    CHECK(s <= tau);
  }
  // unbounded delay still terminates
  const RunResult r = simulate(p.data, p.init, StepState::adadelta(),
                               sim_config(kUnboundedDelay, 50, "list:1,50"), {});
  CHECK(r.trace.status == RunStatus::Completed);
  CHECK(max_staleness_from_trace(r.trace) > 5);
}

TEST_CASE("a frozen worker is excluded or aborts the run") {
  const Problem p = small_problem();
  SimulationConfig c = sim_config(2, 60, "const:1;freeze=2@10");
  RunResult r = simulate(p.data, p.init, StepState::adadelta(), c, {});
  CHECK(r.trace.status == RunStatus::Completed);
  CHECK(r.final_params.version == 60);
  CHECK(r.counters.excluded_workers == std::vector<int>{2});
  bool logged = false;
  for (const auto& e : r.trace.events)
    logged = logged || (e.action == TraceAction::Exclude && e.worker == 2);
  CHECK(logged);

  c.loss_policy = WorkerLossPolicy::Abort;
  r = simulate(p.data, p.init, StepState::adadelta(), c, {});
  CHECK(r.trace.status == RunStatus::Aborted);
  CHECK(r.final_params.version < 60);

  c = sim_config(2, 60, "const:1;freeze=0@0;freeze=1@0;freeze=2@0;freeze=3@0");
  r = simulate(p.data, p.init, StepState::adadelta(), c, {});
  CHECK(r.trace.status == RunStatus::Aborted);
  CHECK(r.final_params.version == 0);
}

TEST_CASE("time budget and target stop the simulation early") {
  const Problem p = small_problem();
  SimulationConfig c = sim_config(2, 1000, "const:1");
  c.time_budget = 25.0;
  const Evaluator eval = neg_elbo_evaluator(p.data, c.worker);
  RunResult r = simulate(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(r.trace.status == RunStatus::Completed);
  CHECK(r.final_params.version < 1000);
  CHECK(r.trace.metrics.back().time <= 25.0);
  CHECK(r.trace.metrics.back().iteration == r.final_params.version);

  c.time_budget = std::numeric_limits<double>::infinity();
  const double start = r.trace.metrics.front().neg_elbo;
  c.target_neg_elbo = start - 1.0;
  r = simulate(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(r.final_params.version < 1000);
  CHECK(r.trace.metrics.back().neg_elbo <= start - 1.0);
  CHECK(r.trace.message.find("target") != std::string::npos);
}

TEST_CASE("threaded run honours tau and matches the reference at tau = 0") {
  const Problem p = small_problem();
  ThreadedConfig c;
  c.workers = 3;
  c.tau = 0;
  c.max_iters = 25;
  c.eval_every = 5;
  const Evaluator eval = neg_elbo_evaluator(p.data, c.worker);
  const RunResult thr = run_threaded(p.data, p.init, StepState::adadelta(), c, eval);
  const RunResult ref = reference_run(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(thr.trace.status == RunStatus::Completed);
  CHECK(thr.final_params == ref.final_params);

  c.tau = 2;
  c.max_iters = 60;
  c.sleep = LatencyModel::parse("list:0,0.001,0.003", 3, 0);
  const RunResult r = run_threaded(p.data, p.init, StepState::adadelta(), c, eval);
  CHECK(r.trace.status == RunStatus::Completed);
  CHECK(r.final_params.version == 60);
  const auto s = max_staleness_from_trace(r.trace);
  CHECK(s >= 0);
  CHECK(s <= 2);
}

TEST_CASE("threaded run excludes a worker that stops responding") {
  const Problem p = small_problem();
  ThreadedConfig c;
  c.workers = 3;
  c.tau = 1;
  c.max_iters = 30;
  c.heartbeat_timeout = 0.2;
  c.sleep = LatencyModel::parse("const:0;freeze=1@5", 3, 0);
  const RunResult r = run_threaded(p.data, p.init, StepState::adadelta(), c, {});
  CHECK(r.trace.status == RunStatus::Completed);
  CHECK(r.final_params.version == 30);
  CHECK(r.counters.excluded_workers == std::vector<int>{1});
}

TEST_CASE("trace files round-trip") {
  RunTrace t;
  t.events = {{0.0, -1, 0, TraceAction::Publish},
              {0.0, 0, 0, TraceAction::Pull},
              {1.25, 0, 0, TraceAction::Push},
              {1.25, -1, 0, TraceAction::Apply},
              {0.1 + 0.2, 1, 3, TraceAction::Fault}};
  t.metrics = {{0, 0.0, 12.5, std::nullopt, std::nullopt},
               {5, 3.0, 1.0 / 3.0, 0.25, -0.125}};
  std::stringstream ss;
  write_trace(ss, t);
  const RunTrace back = read_trace(ss);
  CHECK(back.metrics == t.metrics);
  REQUIRE(back.events.size() == t.events.size());
  // events are ordered by time on write
  for (const auto& e : t.events)
    CHECK(std::find(back.events.begin(), back.events.end(), e) != back.events.end());

  std::stringstream bad("event,1,0,0,Dance\n");
  CHECK_THROWS(read_trace(bad));
  for (auto a : {TraceAction::Pull, TraceAction::Push, TraceAction::Apply,
                 TraceAction::Publish, TraceAction::Exclude, TraceAction::Fault,
                 TraceAction::Terminal})
    CHECK(parse_trace_action(to_string(a)) == a);

  std::stringstream csv;
  write_metrics_csv(csv, t.metrics);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "iteration,time,neg_elbo,rmse,mnlp");
}

TEST_CASE("staleness is recomputed from push and apply events") {
  RunTrace t;
  t.events = {{0, 0, 0, TraceAction::Push}, {0, 1, 0, TraceAction::Push},
              {1, -1, 0, TraceAction::Apply}, {2, 0, 1, TraceAction::Push},
              {3, -1, 1, TraceAction::Apply}, {4, 0, 2, TraceAction::Push},
              {5, -1, 2, TraceAction::Apply}};
  CHECK(max_staleness_from_trace(t) == 2);
  RunTrace missing;
  missing.events = {{0, 0, 0, TraceAction::Push}, {1, -1, 0, TraceAction::Apply}};
  CHECK(max_staleness_from_trace(missing) == 0);
}

TEST_CASE("latency models") {
  const LatencyModel c = LatencyModel::parse("const:2.5", 3, 0);
  CHECK(c.compute_time(1, 7) == 2.5);
  const LatencyModel l = LatencyModel::parse("list:1,2", 3, 0);
  CHECK(l.compute_time(0, 0) == 1.0);
  CHECK(l.compute_time(2, 0) == 1.0);
  CHECK(l.nominal(1) == 2.0);
  const LatencyModel t = LatencyModel::parse("tiers:1,2,4", 3, 9);
  std::vector<double> seen{t.nominal(0), t.nominal(1), t.nominal(2)};
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<double>{1, 2, 4});
  CHECK(t.median_nominal(3) == 2.0);
  const LatencyModel j = LatencyModel::parse("const:1;jitter=0.5", 2, 4);
  const double v = j.compute_time(1, 3);
  CHECK(v >= 0.5);
  CHECK(v <= 1.5);
  CHECK(v == LatencyModel::parse("const:1;jitter=0.5", 2, 4).compute_time(1, 3));
  const LatencyModel u = LatencyModel::parse("uniform:2,3", 2, 1);
  CHECK(u.compute_time(0, 0) >= 2.0);
  const LatencyModel f = LatencyModel::parse("const:1;freeze=1@3", 2, 0);
  CHECK(f.compute_time(1, 2) == 1.0);
  CHECK(std::isinf(f.compute_time(1, 3)));
  CHECK_THROWS(LatencyModel::parse("bogus:1", 2, 0));
  CHECK_THROWS(LatencyModel::parse("const:-1", 2, 0));
}
