// Command-line front end: train, simulate, predict, evaluate, oracle-check.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asyncgp/dataset.hpp"
#include "asyncgp/gradcheck.hpp"
#include "asyncgp/model.hpp"
#include "asyncgp/oracle.hpp"
#include "asyncgp/simd.hpp"
#include "asyncgp/train.hpp"

using namespace asyncgp;

namespace {

struct Flag {
  const char* key;
  const char* help;
};

const std::vector<Flag> kRunFlags = {
    {"train", "training CSV"},
    {"test", "test CSV (metrics use it when given)"},
    {"target", "target column name or index"},
    {"m", "number of inducing points"},
    {"tau", "staleness bound, or 'inf'"},
    {"workers", "number of workers"},
    {"feature-map", "chol | nystrom | ensemble"},
    {"ensemble-groups", "groups for the ensemble map"},
    {"step", "adadelta | fixed"},
    {"rho", "Adadelta decay"},
    {"eps", "Adadelta epsilon"},
    {"step-margin", "fixed step: gamma = 1 / ((1 + tau) C + margin)"},
    {"gamma-prox", "proximal step size under Adadelta"},
    {"prox", "scalar (fixed gamma-prox) | matched (Adadelta's per-coordinate step)"},
    {"train-hypers", "true | false | auto"},
    {"iters", "server iterations"},
    {"seed", "seed for k-means, latency draws and synthetic data"},
    {"eval-every", "metric row every N iterations (0: first and last)"},
    {"log-sigma", "initial ln(noise std), or 'auto'"},
    {"kmeans-max-rows", "k-means subsample cap"},
    {"loss-policy", "exclude | abort"},
    {"heartbeat-timeout", "seconds / time units; 0 derives it from latency"},
    {"metrics-out", "metrics CSV path"},
    {"model-out", "model artifact path"},
};

const std::vector<Flag> kSimFlags = {
    {"latency-model", "KIND:ARGS[;jitter=F][;freeze=W@I]"},
    {"server-time", "virtual time per server update"},
    {"comm-delay", "virtual time from worker to server"},
    {"time-budget", "stop when virtual time passes this, or 'inf'"},
    {"target-neg-elbo", "stop at the first metric row at or below this, or 'none'"},
};

/// Flags of one run-style subcommand, applied on top of --config.
struct RunFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  bool print_config = false;
  std::string trace_out;

  void attach(CLI::App* app, bool simulate) {
    app->add_option("--config", config_path, "key = value file, overridden by flags")
        ->check(CLI::ExistingFile);
    app->add_flag("--print-config", print_config,
                  "print the effective configuration and exit");
    app->add_option("--trace-out", trace_out, "event/metric trace path");
    auto add = [&](const Flag& f) {
      options[f.key] = app->add_option(std::string("--") + f.key, values[f.key], f.help);
    };
    for (const auto& f : kRunFlags) add(f);
    if (simulate)
      for (const auto& f : kSimFlags) add(f);
  }

  RunConfig resolve() const {
    RunConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      apply_config_text(config, in);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_config_value(config, key, values.at(key));
    return config;
  }
};

void print_metrics_summary(const TrainOutput& out) {
  std::printf("iterations      %lld\n", static_cast<long long>(out.iterations));
  if (!out.trace.metrics.empty()) {
    const auto& last = out.trace.metrics.back();
    std::printf("neg_elbo        %.10g\n", last.neg_elbo);
    if (last.rmse) std::printf("test_rmse       %.10g\n", *last.rmse);
    if (last.mnlp) std::printf("test_mnlp       %.10g\n", *last.mnlp);
  }
  const auto& c = out.counters;
  std::printf("updates         %lld applied, %lld skipped\n",
              static_cast<long long>(c.updates.applied),
              static_cast<long long>(c.updates.skipped_non_finite));
  if (c.dropped_contributions > 0)
    std::printf("dropped         %lld worker contributions\n",
                static_cast<long long>(c.dropped_contributions));
  for (int k : c.excluded_workers) std::printf("excluded        worker %d\n", k);
  if (out.trace.status == RunStatus::Completed && !out.trace.message.empty())
    std::printf("stopped         %s\n", out.trace.message.c_str());
  else if (out.trace.status != RunStatus::Completed)
    std::printf("status          %s (%s)\n",
                out.trace.status == RunStatus::Aborted ? "aborted" : "deadlocked",
                out.trace.message.c_str());
}

int run_training(const RunFlags& flags, ExecutionMode mode) {
  const RunConfig config = flags.resolve();
  if (flags.print_config) {
    write_config(std::cout, config);
    return 0;
  }
  if (config.train_path.empty()) throw CLI::ValidationError("--train is required");
  const Dataset train_set = ingest_csv(config.train_path, config.target);
  if (train_set.dropped_rows > 0)
    std::fprintf(stderr, "dropped %zu malformed training rows\n",
                 train_set.dropped_rows);
  std::optional<Dataset> test_set;
  if (!config.test_path.empty()) {
    IngestOptions opts;
    opts.reuse = train_set.standardization;
    test_set = ingest_csv(config.test_path, config.target, opts);
    if (test_set->dropped_rows > 0)
      std::fprintf(stderr, "dropped %zu malformed test rows\n",
                   test_set->dropped_rows);
  }

  const TrainOutput out =
      train(train_set, test_set ? &*test_set : nullptr, config, mode);
  print_metrics_summary(out);
  if (test_set) {
    const BaselineScores b = baselines(train_set, *test_set);
    std::printf("baseline_mean   %.10g\n", b.mean_prediction_rmse);
    std::printf("baseline_linear %.10g\n", b.linear_regression_rmse);
  }
  if (!flags.trace_out.empty()) {
    std::ofstream trace(flags.trace_out);
    write_trace(trace, out.trace);
  }
  return out.trace.status == RunStatus::Completed ? 0 : 3;
}

int run_predict(const std::string& model_path, const std::string& input,
                const std::string& output) {
  const TrainedModel model = load_model(model_path);
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input);
  const Eigen::MatrixXd X = read_features_csv(in, model.feature_names);
  const Predictions p = predict(model, X);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw std::runtime_error("cannot write " + output);
    out = &file;
  }
  *out << "mean,var_f,var_y\n";
  char buf[96];
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.mean_f(i),
                  p.var_f(i), p.var_y(i));
    *out << buf;
  }
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& test_path,
                 const std::string& train_path, const std::string& target) {
  const TrainedModel model = load_model(model_path);
  IngestOptions opts;
  opts.reuse = model.standardization;
  const Dataset test = ingest_csv(test_path, target, opts);
  const Metrics m = evaluate(test, model);
  std::printf("rows            %lld\n", static_cast<long long>(test.rows()));
  std::printf("rmse            %.10g\n", m.rmse);
  std::printf("mnlp            %.10g\n", m.mnlp);
  if (!train_path.empty()) {
    const Dataset train_set = ingest_csv(train_path, target, opts);
    const BaselineScores b = baselines(train_set, test);
    std::printf("baseline_mean   %.10g\n", b.mean_prediction_rmse);
    std::printf("baseline_linear %.10g\n", b.linear_regression_rmse);
  }
  return 0;
}

int run_oracle_check(int instances, std::uint64_t seed) {
  double worst_grad = 0.0;
  double worst_gap = -INFINITY;
  for (int i = 0; i < instances; ++i) {
    const auto inst = oracle::random_instance(seed + static_cast<std::uint64_t>(i),
                                              20, 3, 5);
    const auto err = oracle::gradient_errors(inst);
    const Basis basis = build_basis(inst.hp, FeatureMapKind::Cholesky);
    const double gap = -neg_elbo(inst.X, inst.y, inst.vs, inst.hp, basis) -
                       oracle::exact_log_evidence(inst.X, inst.y, inst.hp);
    std::printf("instance %3d  grad_rel_err %.3e  elbo - log_evidence %.6e\n", i,
                err.max(), gap);
    worst_grad = std::max(worst_grad, err.max());
    worst_gap = std::max(worst_gap, gap);
  }
  const bool ok = worst_grad <= 1e-5 && worst_gap <= 1e-8;
  std::printf("simd backend %s\n",
              std::string(simd::backend_name(simd::active_backend())).c_str());
  std::printf("%s: worst gradient error %.3e, worst bound gap %.3e\n",
              ok ? "PASS" : "FAIL", worst_grad, worst_gap);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational sparse GP regression with bounded-delay asynchronous training"};
  app.require_subcommand(1);

  RunFlags train_flags, sim_flags;
  bool reference = false;
  auto* train_cmd = app.add_subcommand("train", "train with a server thread and worker threads");
  train_flags.attach(train_cmd, false);
  train_cmd->add_flag("--reference", reference,
                      "single-threaded synchronous run instead of threads");

  auto* sim_cmd = app.add_subcommand("simulate", "train in deterministic virtual time");
  sim_flags.attach(sim_cmd, true);

  std::string model_path, input_path, output_path, test_path, train_path,
      target = "y";
  auto* predict_cmd = app.add_subcommand("predict", "predict from a saved model");
  predict_cmd->add_option("--model", model_path, "model artifact")->required();
  predict_cmd->add_option("--input", input_path, "CSV with the model's feature columns")
      ->required();
  predict_cmd->add_option("--out", output_path, "output CSV (default stdout)");

  auto* eval_cmd = app.add_subcommand("evaluate", "RMSE and MNLP of a saved model");
  eval_cmd->add_option("--model", model_path, "model artifact")->required();
  eval_cmd->add_option("--test", test_path, "test CSV")->required();
  eval_cmd->add_option("--target", target, "target column");
  eval_cmd->add_option("--train", train_path, "training CSV, enables baselines");

  int instances = 20;
  std::uint64_t seed = 0;
  auto* oracle_cmd = app.add_subcommand(
      "oracle-check", "gradient and bound checks on random small problems");
  oracle_cmd->add_option("--instances", instances, "number of random problems");
  oracle_cmd->add_option("--seed", seed, "first seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd)
      return run_training(train_flags, reference ? ExecutionMode::Reference
                                                 : ExecutionMode::Threaded);
    if (*sim_cmd) return run_training(sim_flags, ExecutionMode::Simulated);
    if (*predict_cmd) return run_predict(model_path, input_path, output_path);
    if (*eval_cmd) return run_evaluate(model_path, test_path, train_path, target);
    if (*oracle_cmd) return run_oracle_check(instances, seed);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
