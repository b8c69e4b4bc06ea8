// Acceptance runs. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "asyncgp/coordination.hpp"
#include "asyncgp/dataset.hpp"
#include "asyncgp/gradcheck.hpp"
#include "asyncgp/model.hpp"
#include "asyncgp/oracle.hpp"
#include "asyncgp/train.hpp"

using namespace asyncgp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int instances = 25;
  for (int i = 0; i < instances; ++i) {
    const auto inst = oracle::random_instance(1000 + static_cast<std::uint64_t>(i), 20, 3, 5);
    worst = std::max(worst, oracle::gradient_errors(inst).max());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 30.0,
          fmt("%d instances, worst relative error %.2e, %.1f s", instances, worst, secs)};
}

Outcome bound_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_gap = -std::numeric_limits<double>::infinity();
  double worst_tight = 0.0;
  const int instances = 60;
  for (int i = 0; i < instances; ++i) {
    const auto seed = 2000 + static_cast<std::uint64_t>(i);
    const Eigen::Index n = 10 + i % 21;  // 10..30
    const auto inst = oracle::random_instance(seed, n, 3, 2 + i % 6);
    const Basis b = build_basis(inst.hp, FeatureMapKind::Cholesky);
    const double ev = oracle::exact_log_evidence(inst.X, inst.y, inst.hp);
    worst_gap = std::max(worst_gap, -neg_elbo(inst.X, inst.y, inst.vs, inst.hp, b) - ev);
    const VariationalState q = optimal_q(inst.X, inst.y, inst.hp, b);
    worst_gap = std::max(worst_gap, -neg_elbo(inst.X, inst.y, q, inst.hp, b) - ev);

    auto on_data = inst;
    on_data.hp.Z = inst.X;
    const Basis bz = build_basis(on_data.hp, FeatureMapKind::Cholesky, 1e-12);
    const VariationalState qz = optimal_q(inst.X, inst.y, on_data.hp, bz);
    const double tight = -neg_elbo(inst.X, inst.y, qz, on_data.hp, bz);
    worst_tight = std::max(worst_tight, std::abs(tight - ev) / std::max(1.0, std::abs(ev)));
  }
  const double secs = seconds_since(t0);
  return {worst_gap <= 1e-8 && worst_tight <= 1e-6 && secs < 10.0,
          fmt("%d instances, max(elbo - evidence) %.2e, Z = X gap %.2e, %.1f s",
              instances, worst_gap, worst_tight, secs)};
}

// argmin_v h(v) + (v - pre)^2 / (2 gamma) by golden-section search.
double numeric_prox(double pre, double gamma, bool diagonal) {
  auto f = [&](double v) {
    const double h = diagonal ? 0.5 * v * v - std::log(v) : 0.5 * v * v;
    return h + (v - pre) * (v - pre) / (2.0 * gamma);
  };
  double lo = diagonal ? 1e-12 : -1e3, hi = 1e3;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = f(a), fb = f(b);
  for (int i = 0; i < 300; ++i) {
    if (fa < fb) {
      hi = b, b = a, fb = fa;
      a = hi - g * (hi - lo), fa = f(a);
    } else {
      lo = a, a = b, fa = fb;
      b = lo + g * (hi - lo), fb = f(b);
    }
  }
  return 0.5 * (lo + hi);
}

Outcome prox_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> val(-4.0, 4.0), lg(-5.0, 1.0);
  double worst = 0.0;
  bool positive = true;
  const int draws = 200;
  for (int d = 0; d < draws; ++d) {
    VariationalState pre;
    pre.mu = Eigen::VectorXd::NullaryExpr(4, [&] { return val(rng); });
    pre.U = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return val(rng); })
                .triangularView<Eigen::Upper>();
    const double gamma = std::pow(10.0, lg(rng));
    const VariationalState out = prox_step(pre, gamma);
    for (Eigen::Index i = 0; i < 4; ++i) {
      worst = std::max(worst, std::abs(out.mu(i) - numeric_prox(pre.mu(i), gamma, false)));
      positive = positive && out.U(i, i) > 0.0;
      for (Eigen::Index j = i; j < 4; ++j)
        worst = std::max(worst, std::abs(out.U(i, j) - numeric_prox(pre.U(i, j), gamma, i == j)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && positive && secs < 5.0,
          fmt("%d draws, worst deviation %.2e, diagonal positive: %s, %.2f s", draws,
              worst, positive ? "yes" : "no", secs)};
}

struct Problem {
  TrainingData data;
  ModelParams init;
};

Problem seeded_problem(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  const auto raw = synthetic_data(n, 3, 0.1, seed, SyntheticKind::Nonlinear);
  const Dataset ds = make_dataset(raw.X, raw.y);
  InitOptions io;
  io.m = m;
  io.seed = seed;
  return {{ds.X, ds.y}, init_state(ds, io)};
}

bool same_metrics(const RunTrace& a, const RunTrace& b) {
  if (a.metrics.size() != b.metrics.size()) return false;
  for (std::size_t i = 0; i < a.metrics.size(); ++i)
    if (a.metrics[i].iteration != b.metrics[i].iteration ||
        a.metrics[i].neg_elbo != b.metrics[i].neg_elbo)
      return false;
  return true;
}

Outcome synchrony() {
  const Problem p = seeded_problem(2000, 15, 3);
  SimulationConfig sc;
  sc.workers = 4;
  sc.tau = 0;
  sc.max_iters = 100;
  sc.eval_every = 1;
  sc.latency = LatencyModel::parse("tiers:1,2,4;jitter=0.3", 4, 3);
  const Evaluator eval = neg_elbo_evaluator(p.data, sc.worker);
  const RunResult ref = reference_run(p.data, p.init, StepState::adadelta(), sc, eval);
  const RunResult sim = simulate(p.data, p.init, StepState::adadelta(), sc, eval);
  ThreadedConfig tc;
  static_cast<RunConfigCore&>(tc) = sc;
  tc.sleep = LatencyModel::parse("list:0,0.0005,0.001,0", 4, 0);
  const RunResult thr = run_threaded(p.data, p.init, StepState::adadelta(), tc, eval);
  const bool sim_ok = sim.final_params == ref.final_params && same_metrics(sim.trace, ref.trace);
  const bool thr_ok = thr.final_params == ref.final_params && same_metrics(thr.trace, ref.trace);
  return {sim_ok && thr_ok && ref.final_params.version == 100,
          fmt("100 iterations, 4 workers: simulated %s, threaded %s",
              sim_ok ? "identical" : "DIFFERS", thr_ok ? "identical" : "DIFFERS")};
}

Outcome staleness() {
  const Problem p = seeded_problem(1000, 10, 5);
  std::string detail;
  bool ok = true;
  for (std::int64_t tau : {2, 8, 32}) {
    SimulationConfig sc;
    sc.workers = 4;
    sc.tau = tau;
    sc.max_iters = 1000;
    sc.latency = LatencyModel::parse("tiers:1,3,50;jitter=0.2", 4, 5);
    const RunResult r = simulate(p.data, p.init, StepState::adadelta(), sc, {});
    const auto s = max_staleness_from_trace(r.trace);
    const bool this_ok = r.trace.status == RunStatus::Completed &&
                         r.final_params.version == 1000 && s >= 0 && s <= tau;
    ok = ok && this_ok;
    detail += fmt("%stau %lld: max staleness %lld%s", detail.empty() ? "" : ", ",
                  static_cast<long long>(tau), static_cast<long long>(s),
                  r.trace.status == RunStatus::Completed ? "" : " (stalled)");
  }
  return {ok, detail};
}

Outcome monotone() {
  const Problem p = seeded_problem(3000, 20, 6);
  const Basis basis = build_basis(p.init.hp, FeatureMapKind::Cholesky);
  const double C = estimate_lipschitz(p.data.X, p.init.hp, basis);
  RunConfigCore rc;
  rc.workers = 4;
  rc.tau = 0;
  rc.max_iters = 200;
  rc.eval_every = 1;
  rc.update.train_hypers = false;
  const RunResult r =
      reference_run(p.data, p.init, StepState::fixed_theorem(C, 0, 1e-9), rc,
                    neg_elbo_evaluator(p.data, rc.worker));
  int rises = 0;
  double worst = -std::numeric_limits<double>::infinity();
  const auto& m = r.trace.metrics;
  for (std::size_t i = 1; i < m.size(); ++i) {
    const double rise = m[i].neg_elbo - m[i - 1].neg_elbo;
    worst = std::max(worst, rise);
    if (rise > 1e-10 * std::max(1.0, std::abs(m[i - 1].neg_elbo))) ++rises;
  }
  return {m.size() == 201 && rises == 0,
          fmt("200 steps, gamma = 1/C with C %.4g, %d increases, largest step change %.3e, "
              "neg_elbo %.6g -> %.6g",
              C, rises, worst, m.front().neg_elbo, m.back().neg_elbo)};
}

Outcome convergence_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto all = synthetic_data(12000, 3, 0.1, 7, SyntheticKind::Nonlinear);
  const auto [tr, te] = split_rows(all, 10000);
  const Dataset train_set = make_dataset(tr.X, tr.y);
  IngestOptions o;
  o.reuse = train_set.standardization;
  const Dataset test_set = make_dataset(te.X, te.y, o);

  RunConfig c;
  c.m = 20;
  c.workers = 4;
  c.seed = 1;
  c.max_iters = 3000;
  c.eval_every = 500;
  c.train_hypers = false;
  c.prox = ProxScale::Matched;
  c.eps = 1e-7;
  c.tau = 0;
  const TrainOutput sync = train(train_set, &test_set, c, ExecutionMode::Simulated);
  c.tau = 8;
  const TrainOutput async = train(train_set, &test_set, c, ExecutionMode::Simulated);
  const double secs = seconds_since(t0);

  const double e0 = sync.trace.metrics.back().neg_elbo;
  const double e8 = async.trace.metrics.back().neg_elbo;
  const double gap = std::abs(e8 - e0) / std::abs(e0);
  const double rmse = *async.trace.metrics.back().rmse;
  const BaselineScores b = baselines(train_set, test_set);
  return {gap <= 0.01 && rmse < b.mean_prediction_rmse && rmse < b.linear_regression_rmse &&
              secs < 120.0,
          fmt("neg_elbo tau=0 %.2f, tau=8 %.2f (gap %.3f%%); rmse %.4f vs mean %.4f, "
              "linear %.4f; %.1f s",
              e0, e8, 100.0 * gap, rmse, b.mean_prediction_rmse,
              b.linear_regression_rmse, secs)};
}

Outcome tau_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto raw = synthetic_data(2000, 3, 0.1, 7, SyntheticKind::Nonlinear);
  const Dataset train_set = make_dataset(raw.X, raw.y);
  const double target = 1000.0;

  RunConfig c;
  c.m = 20;
  c.workers = 4;
  c.seed = 1;
  c.max_iters = 200000;
  c.eval_every = 10;
  c.latency_model = "tiers:1,10,100";
  c.target_neg_elbo = target;

  const std::int64_t taus[] = {0, 4, 8, 32, 128};
  std::vector<double> hit;
  double budget = std::numeric_limits<double>::infinity();
  std::string detail;
  for (std::int64_t tau : taus) {
    c.tau = tau;
    c.time_budget = budget;
    const TrainOutput out = train(train_set, nullptr, c, ExecutionMode::Simulated);
    double t = std::numeric_limits<double>::infinity();
    for (const auto& row : out.trace.metrics)
      if (row.neg_elbo <= target) {
        t = row.time;
        break;
      }
    if (tau == 0) budget = t;
    hit.push_back(t);
    detail += fmt("%stau %lld: %s", detail.empty() ? "" : ", ",
                  static_cast<long long>(tau),
                  std::isfinite(t) ? fmt("%.0f", t).c_str() : "not reached");
  }
  const double best = *std::min_element(hit.begin() + 1, hit.end());
  const bool pass = std::isfinite(hit[0]) && best < hit[0] && hit.back() > best;
  return {pass, fmt("virtual time to neg_elbo <= %.0f: %s; %.1f s", target,
                    detail.c_str(), seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"bound suite", bound_suite},
      {"prox suite", prox_suite},
      {"synchrony equivalence", synchrony},
      {"bounded staleness", staleness},
      {"monotone descent", monotone},
      {"asynchronous convergence quality", convergence_quality},
      {"tau sweep shape", tau_sweep},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  criterion %d  %s: %s\n", o.pass ? "PASS" : "FAIL", id,
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
