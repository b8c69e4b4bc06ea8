#include "asyncgp/train.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace asyncgp {

namespace {

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void write_metrics(const std::string& path, const std::vector<MetricRow>& rows) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_metrics_csv(out, rows);
}

}  // namespace

std::string tau_to_string(std::int64_t tau) {
  return tau == kUnboundedDelay ? "inf" : std::to_string(tau);
}

std::int64_t parse_tau(const std::string& text) {
  if (text == "inf" || text == "unbounded") return kUnboundedDelay;
  const auto v = parse_integer<std::int64_t>("tau", text);
  if (v < 0) throw std::invalid_argument("tau: must be >= 0 or 'inf'");
  return v;
}

bool RunConfig::hypers_trained() const {
  return train_hypers.value_or(feature_map == FeatureMapKind::Cholesky);
}

void RunConfig::validate() const {
  if (m < 1) throw std::invalid_argument("m: must be >= 1");
  if (tau < 0 && tau != kUnboundedDelay)
    throw std::invalid_argument("tau: must be >= 0 or unbounded");
  if (workers < 1) throw std::invalid_argument("workers: must be >= 1");
  if (ensemble_groups < 1)
    throw std::invalid_argument("ensemble-groups: must be >= 1");
  if (max_iters < 0) throw std::invalid_argument("iters: must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("eval-every: must be >= 0");
  if (!(gamma_prox > 0.0)) throw std::invalid_argument("gamma-prox: must be > 0");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho: must be in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps: must be > 0");
  if (step == StepMode::FixedTheorem && tau == kUnboundedDelay)
    throw std::invalid_argument("step: fixed steps need a finite tau");
  if (hypers_trained() && feature_map != FeatureMapKind::Cholesky)
    throw std::invalid_argument(
        "train-hypers: only supported with the chol feature map");
}

void apply_config_value(RunConfig& c, const std::string& key,
                        const std::string& value) {
  if (key == "train") c.train_path = value;
  else if (key == "test") c.test_path = value;
  else if (key == "target") c.target = value;
  else if (key == "m") c.m = parse_integer<Eigen::Index>(key, value);
  else if (key == "tau") c.tau = parse_tau(value);
  else if (key == "workers") c.workers = parse_integer<int>(key, value);
  else if (key == "feature-map") c.feature_map = parse_feature_map(value);
  else if (key == "ensemble-groups") c.ensemble_groups = parse_integer<int>(key, value);
  else if (key == "step") {
    if (value == "adadelta") c.step = StepMode::Adadelta;
    else if (value == "fixed") c.step = StepMode::FixedTheorem;
    else throw std::invalid_argument("step: expected adadelta or fixed");
  }
  else if (key == "prox") {
    if (value == "scalar") c.prox = ProxScale::Scalar;
    else if (value == "matched") c.prox = ProxScale::Matched;
    else throw std::invalid_argument("prox: expected scalar or matched");
  }
  else if (key == "rho") c.rho = parse_real(key, value);
  else if (key == "eps") c.eps = parse_real(key, value);
  else if (key == "step-margin") c.step_margin = parse_real(key, value);
  else if (key == "gamma-prox") c.gamma_prox = parse_real(key, value);
  else if (key == "train-hypers") {
    if (value == "auto") c.train_hypers.reset();
    else c.train_hypers = parse_bool(key, value);
  }
  else if (key == "iters") c.max_iters = parse_integer<std::int64_t>(key, value);
  else if (key == "seed") c.seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "eval-every") c.eval_every = parse_integer<std::int64_t>(key, value);
  else if (key == "log-sigma") {
    if (value == "auto") c.log_sigma.reset();
    else c.log_sigma = parse_real(key, value);
  }
  else if (key == "kmeans-max-rows")
    c.kmeans_max_rows = parse_integer<Eigen::Index>(key, value);
  else if (key == "loss-policy") {
    if (value == "exclude") c.loss_policy = WorkerLossPolicy::ExcludeAndContinue;
    else if (value == "abort") c.loss_policy = WorkerLossPolicy::Abort;
    else throw std::invalid_argument("loss-policy: expected exclude or abort");
  }
  else if (key == "heartbeat-timeout") c.heartbeat_timeout = parse_real(key, value);
  else if (key == "latency-model") c.latency_model = value;
  else if (key == "server-time") c.server_time = parse_real(key, value);
  else if (key == "comm-delay") c.comm_delay = parse_real(key, value);
  else if (key == "time-budget") {
    if (value == "inf") c.time_budget = std::numeric_limits<double>::infinity();
    else c.time_budget = parse_real(key, value);
  }
  else if (key == "target-neg-elbo") {
    if (value == "none") c.target_neg_elbo.reset();
    else c.target_neg_elbo = parse_real(key, value);
  }
  else if (key == "metrics-out") c.metrics_out = value;
  else if (key == "model-out") c.model_out = value;
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& config, std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    apply_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void write_config(std::ostream& out, const RunConfig& c) {
  out << "train = " << c.train_path << '\n'
      << "test = " << c.test_path << '\n'
      << "target = " << c.target << '\n'
      << "m = " << c.m << '\n'
      << "tau = " << tau_to_string(c.tau) << '\n'
      << "workers = " << c.workers << '\n'
      << "feature-map = " << to_string(c.feature_map) << '\n'
      << "ensemble-groups = " << c.ensemble_groups << '\n'
      << "step = " << (c.step == StepMode::Adadelta ? "adadelta" : "fixed") << '\n'
      << "rho = " << c.rho << '\n'
      << "eps = " << c.eps << '\n'
      << "step-margin = " << c.step_margin << '\n'
      << "gamma-prox = " << c.gamma_prox << '\n'
      << "prox = " << (c.prox == ProxScale::Scalar ? "scalar" : "matched") << '\n'
      << "train-hypers = "
      << (c.train_hypers ? (*c.train_hypers ? "true" : "false") : "auto") << '\n'
      << "iters = " << c.max_iters << '\n'
      << "seed = " << c.seed << '\n'
      << "eval-every = " << c.eval_every << '\n'
      << "log-sigma = " << (c.log_sigma ? std::to_string(*c.log_sigma) : "auto") << '\n'
      << "kmeans-max-rows = " << c.kmeans_max_rows << '\n'
      << "loss-policy = "
      << (c.loss_policy == WorkerLossPolicy::Abort ? "abort" : "exclude") << '\n'
      << "heartbeat-timeout = " << c.heartbeat_timeout << '\n'
      << "latency-model = " << c.latency_model << '\n'
      << "server-time = " << c.server_time << '\n'
      << "comm-delay = " << c.comm_delay << '\n'
      << "time-budget = "
      << (std::isinf(c.time_budget) ? std::string("inf") : std::to_string(c.time_budget))
      << '\n'
      << "target-neg-elbo = "
      << (c.target_neg_elbo ? std::to_string(*c.target_neg_elbo) : std::string("none"))
      << '\n'
      << "metrics-out = " << c.metrics_out << '\n'
      << "model-out = " << c.model_out << '\n';
}

TrainOutput train(const Dataset& train_set, const Dataset* test_set,
                  const RunConfig& config, ExecutionMode mode) {
  config.validate();
  InitOptions init_opts;
  init_opts.m = config.m;
  init_opts.seed = config.seed;
  init_opts.kmeans_max_rows = config.kmeans_max_rows;
  init_opts.log_sigma = config.log_sigma;
  const ModelParams initial = init_state(train_set, init_opts);

  const bool hypers = config.hypers_trained();
  WorkerOptions worker;
  worker.feature_map = config.feature_map;
  worker.ensemble_groups = config.ensemble_groups;
  worker.local.hyper_gradients = hypers;
  UpdateOptions update;
  update.gamma_prox = config.gamma_prox;
  update.prox = config.prox;
  update.train_hypers = hypers;

  StepState steps = StepState::adadelta(config.rho, config.eps);
  if (config.step == StepMode::FixedTheorem) {
    const Basis basis = build_basis(initial.hp, config.feature_map,
                                    default_jitter(initial.hp),
                                    config.ensemble_groups);
    const double C = estimate_lipschitz(train_set.X, initial.hp, basis,
                                        20000, config.seed);
    steps = StepState::fixed_theorem(C, config.tau, config.step_margin);
  }

  const TrainingData data{train_set.X, train_set.y};
  std::vector<MetricRow> collected;
  Evaluator evaluator = [&](const ModelParams& p) {
    const Basis basis = build_basis(p.hp, config.feature_map,
                                    default_jitter(p.hp), config.ensemble_groups);
    MetricRow row;
    row.iteration = p.version;
    row.neg_elbo = neg_elbo(data.X, data.y, p.vs, p.hp, basis);
    if (test_set) {
      const Metrics m = evaluate_standardized(*test_set, p.vs, p.hp, basis,
                                              train_set.standardization);
      row.rmse = m.rmse;
      row.mnlp = m.mnlp;
    }
    collected.push_back(row);
    return row;
  };

  RunConfigCore core;
  core.workers = config.workers;
  core.tau = config.tau;
  core.max_iters = config.max_iters;
  core.update = update;
  core.worker = worker;
  core.eval_every = config.eval_every;
  core.loss_policy = config.loss_policy;
  core.heartbeat_timeout = config.heartbeat_timeout;

  RunResult result;
  try {
    switch (mode) {
      case ExecutionMode::Threaded: {
        ThreadedConfig tc;
        static_cast<RunConfigCore&>(tc) = core;
        result = run_threaded(data, initial, steps, tc, evaluator);
        break;
      }
      case ExecutionMode::Simulated: {
        SimulationConfig sc;
        static_cast<RunConfigCore&>(sc) = core;
        sc.latency = LatencyModel::parse(config.latency_model, config.workers,
                                         config.seed);
        sc.server_time = config.server_time;
        sc.comm_delay = config.comm_delay;
        sc.time_budget = config.time_budget;
        sc.target_neg_elbo = config.target_neg_elbo;
        sc.seed = config.seed;
        result = simulate(data, initial, steps, sc, evaluator);
        break;
      }
      case ExecutionMode::Reference:
        result = reference_run(data, initial, steps, core, evaluator);
        break;
    }
  } catch (...) {
    write_metrics(config.metrics_out, collected);
    throw;
  }

  TrainOutput out;
  out.model.hp = result.final_params.hp;
  out.model.vs = result.final_params.vs;
  out.model.feature_map = config.feature_map;
  out.model.ensemble_groups = config.ensemble_groups;
  out.model.standardization = train_set.standardization;
  out.model.feature_names = train_set.feature_names;
  out.model.target_name = train_set.target_name;
  out.iterations = result.final_params.version;
  out.trace = std::move(result.trace);
  out.counters = result.counters;

  write_metrics(config.metrics_out, out.trace.metrics);
  if (!config.model_out.empty()) save_model(config.model_out, out.model);
  return out;
}

}  // namespace asyncgp
