#include "asyncgp/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "asyncgp/kmeans.hpp"

namespace asyncgp {

namespace {

constexpr const char* kMagic = "asyncgp-model";
constexpr int kFormatVersion = 1;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("model: bad number '" + s + "'");
  return v;
}

void put_values(std::ostream& out, const char* key, const double* data,
                Eigen::Index count) {
  out << key;
  for (Eigen::Index i = 0; i < count; ++i) out << ' ' << hex(data[i]);
  out << '\n';
}

void put_matrix(std::ostream& out, const char* key, const Eigen::MatrixXd& M) {
  // row-major on disk
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
  out << key << ' ' << M.rows() << ' ' << M.cols();
  for (Eigen::Index i = 0; i < R.size(); ++i) out << ' ' << hex(R.data()[i]);
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::istringstream line(const std::string& key) {
    std::string text;
    if (!std::getline(in_, text))
      throw std::runtime_error("model: missing '" + key + "'");
    std::istringstream ss(text);
    std::string got;
    ss >> got;
    if (got != key)
      throw std::runtime_error("model: expected '" + key + "', found '" + got +
                               "'");
    return ss;
  }

  std::vector<double> values(const std::string& key) {
    auto ss = line(key);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) out.push_back(parse_hex(tok));
    return out;
  }

  double scalar(const std::string& key) {
    const auto v = values(key);
    if (v.size() != 1) throw std::runtime_error("model: '" + key + "' arity");
    return v[0];
  }

  Eigen::VectorXd vector(const std::string& key) {
    const auto v = values(key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<Eigen::Index>(v.size()));
  }

  Eigen::MatrixXd matrix(const std::string& key) {
    auto ss = line(key);
    Eigen::Index rows = 0, cols = 0;
    if (!(ss >> rows >> cols) || rows < 0 || cols < 0)
      throw std::runtime_error("model: bad shape for '" + key + "'");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(rows, cols);
    std::string tok;
    for (Eigen::Index i = 0; i < R.size(); ++i) {
      if (!(ss >> tok)) throw std::runtime_error("model: short '" + key + "'");
      R.data()[i] = parse_hex(tok);
    }
    return R;
  }

  std::string word(const std::string& key) {
    auto ss = line(key);
    std::string v;
    std::getline(ss >> std::ws, v);
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace

ModelParams init_state(const Dataset& train, const InitOptions& options) {
  if (train.rows() == 0) throw std::invalid_argument("init_state: empty data");
  ModelParams p;
  KMeansOptions km;
  km.max_rows = options.kmeans_max_rows;
  p.hp = HyperParams::defaults(train.dim(),
                               kmeans_init(train.X, options.m, options.seed, km));
  if (options.log_sigma) {
    p.hp.log_sigma = *options.log_sigma;
  } else {
    const double mean = train.y.mean();
    const double sd = std::sqrt((train.y.array() - mean).square().mean());
    p.hp.log_sigma = std::log((sd > 0.0 ? sd : 1.0) / std::numbers::sqrt2);
  }
  p.vs = VariationalState::prior(options.m);
  p.version = 0;
  return p;
}

Basis TrainedModel::basis() const {
  return build_basis(hp, feature_map, default_jitter(hp), ensemble_groups);
}

bool operator==(const TrainedModel& a, const TrainedModel& b) {
  return a.hp == b.hp && a.vs == b.vs && a.feature_map == b.feature_map &&
         a.ensemble_groups == b.ensemble_groups &&
         a.standardization == b.standardization &&
         a.feature_names == b.feature_names && a.target_name == b.target_name;
}

Predictions predict(const Eigen::Ref<const Eigen::MatrixXd>& Xs,
                    const VariationalState& vs, const HyperParams& hp,
                    const Basis& basis) {
  if (Xs.cols() != hp.dim())
    throw std::invalid_argument("predict: input dimension mismatch");
  if (vs.dim() != basis.dim())
    throw std::invalid_argument("predict: state and basis sizes differ");
  const Eigen::MatrixXd Phi = basis.feature_matrix(Xs, hp);
  const Eigen::MatrixXd UPhi = vs.U.triangularView<Eigen::Upper>() * Phi.transpose();
  Predictions out;
  out.mean_f = Phi * vs.mu;
  out.var_f = (hp.signal_variance() - Phi.rowwise().squaredNorm().array() +
               UPhi.colwise().squaredNorm().transpose().array())
                  .max(0.0)
                  .matrix();
  out.var_y = (out.var_f.array() + 1.0 / hp.beta()).matrix();
  return out;
}

Predictions predict(const TrainedModel& model,
                    const Eigen::Ref<const Eigen::MatrixXd>& X_raw) {
  const Eigen::MatrixXd Xs = model.standardization.apply_x(X_raw);
  Predictions p = predict(Xs, model.vs, model.hp, model.basis());
  const double s = model.standardization.y_std;
  p.mean_f = model.standardization.invert_y(p.mean_f);
  p.var_f *= s * s;
  p.var_y *= s * s;
  return p;
}

Metrics score(const Eigen::Ref<const Eigen::VectorXd>& y,
              const Eigen::Ref<const Eigen::VectorXd>& mean,
              const Eigen::Ref<const Eigen::VectorXd>& var) {
  if (y.size() == 0) throw std::invalid_argument("score: empty test set");
  const Eigen::ArrayXd r = (y - mean).array();
  Metrics m;
  m.rmse = std::sqrt(r.square().mean());
  m.mnlp = (0.5 * (2.0 * std::numbers::pi * var.array()).log() +
            r.square() / (2.0 * var.array()))
               .mean();
  return m;
}

Metrics evaluate_standardized(const Dataset& test, const VariationalState& vs,
                              const HyperParams& hp, const Basis& basis,
                              const Standardization& train_map) {
  // Bring the test set into the training coordinates.
  const Eigen::MatrixXd X_raw = test.standardization.invert_x(test.X);
  const Eigen::MatrixXd Xs =
      test.standardization == train_map ? test.X : train_map.apply_x(X_raw);
  const Predictions p = predict(Xs, vs, hp, basis);
  const double s = train_map.y_std;
  return score(test.raw_y(), train_map.invert_y(p.mean_f),
               (p.var_y.array() * s * s).matrix());
}

Metrics evaluate(const Dataset& test, const TrainedModel& model) {
  return evaluate_standardized(test, model.vs, model.hp, model.basis(),
                               model.standardization);
}

BaselineScores baselines(const Dataset& train, const Dataset& test) {
  const Eigen::VectorXd ytr = train.raw_y();
  const Eigen::VectorXd yte = test.raw_y();
  const Eigen::MatrixXd Xtr = train.standardization.invert_x(train.X);
  const Eigen::MatrixXd Xte = test.standardization.invert_x(test.X);
  if (yte.size() == 0) throw std::invalid_argument("baselines: empty test set");

  BaselineScores out;
  out.mean_prediction_rmse =
      std::sqrt((yte.array() - ytr.mean()).square().mean());

  const Eigen::Index d = Xtr.cols();
  Eigen::MatrixXd A(Xtr.rows(), d + 1);
  A.col(0).setOnes();
  A.rightCols(d) = Xtr;
  Eigen::MatrixXd G = A.transpose() * A;
  G.diagonal().array() += 1e-8;
  const Eigen::VectorXd w = G.ldlt().solve(A.transpose() * ytr);
  const Eigen::VectorXd pred = w(0) + (Xte * w.tail(d)).array();
  out.linear_regression_rmse = std::sqrt((yte - pred).array().square().mean());
  return out;
}

void save_model(std::ostream& out, const TrainedModel& model) {
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "feature_map " << to_string(model.feature_map) << '\n';
  out << "ensemble_groups " << model.ensemble_groups << '\n';
  out << "target " << model.target_name << '\n';
  out << "features";
  for (const auto& n : model.feature_names) out << ' ' << n;
  out << '\n';
  put_values(out, "log_sigma", &model.hp.log_sigma, 1);
  put_values(out, "log_a0", &model.hp.log_a0, 1);
  put_values(out, "log_eta", model.hp.log_eta.data(), model.hp.log_eta.size());
  put_matrix(out, "Z", model.hp.Z);
  put_values(out, "mu", model.vs.mu.data(), model.vs.mu.size());
  put_matrix(out, "U", model.vs.U);
  const auto& s = model.standardization;
  put_values(out, "x_mean", s.x_mean.data(), s.x_mean.size());
  put_values(out, "x_std", s.x_std.data(), s.x_std.size());
  put_values(out, "y_mean", &s.y_mean, 1);
  put_values(out, "y_std", &s.y_std, 1);
  out << "end\n";
}

TrainedModel load_model(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw std::runtime_error("model: not a model file");
  if (version != kFormatVersion)
    throw std::runtime_error("model: unsupported format version " +
                             std::to_string(version));
  in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  Reader r(in);
  TrainedModel m;
  m.feature_map = parse_feature_map(r.word("feature_map"));
  m.ensemble_groups = std::stoi(r.word("ensemble_groups"));
  m.target_name = r.word("target");
  {
    auto ss = r.line("features");
    std::string name;
    while (ss >> name) m.feature_names.push_back(name);
  }
  m.hp.log_sigma = r.scalar("log_sigma");
  m.hp.log_a0 = r.scalar("log_a0");
  m.hp.log_eta = r.vector("log_eta");
  m.hp.Z = r.matrix("Z");
  m.vs.mu = r.vector("mu");
  m.vs.U = r.matrix("U");
  m.standardization.x_mean = r.vector("x_mean");
  m.standardization.x_std = r.vector("x_std");
  m.standardization.y_mean = r.scalar("y_mean");
  m.standardization.y_std = r.scalar("y_std");
  r.line("end");
  m.hp.validate();
  m.vs.validate();
  return m;
}

void save_model(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_model(out, model);
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_model(in);
}

}  // namespace asyncgp
