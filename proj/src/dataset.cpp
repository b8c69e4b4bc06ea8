#include "asyncgp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace asyncgp {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delim && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

double population_std(const Eigen::Ref<const Eigen::VectorXd>& v, double mean) {
  return std::sqrt((v.array() - mean).square().mean());
}

}  // namespace

Standardization Standardization::identity(Eigen::Index dim) {
  Standardization s;
  s.x_mean = Eigen::VectorXd::Zero(dim);
  s.x_std = Eigen::VectorXd::Ones(dim);
  return s;
}

Standardization Standardization::fit(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (X.rows() == 0) throw std::invalid_argument("standardization: no rows");
  Standardization s;
  s.x_mean = X.colwise().mean().transpose();
  s.x_std.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = population_std(X.col(j), s.x_mean(j));
    s.x_std(j) = sd > 0.0 ? sd : 1.0;
  }
  s.y_mean = y.mean();
  const double sd = population_std(y, s.y_mean);
  s.y_std = sd > 0.0 ? sd : 1.0;
  return s;
}

Eigen::MatrixXd Standardization::apply_x(
    const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != x_mean.size())
    throw std::invalid_argument("standardization: column count mismatch");
  return ((X.rowwise() - x_mean.transpose()).array().rowwise() /
          x_std.transpose().array())
      .matrix();
}

Eigen::MatrixXd Standardization::invert_x(
    const Eigen::Ref<const Eigen::MatrixXd>& Xs) const {
  return ((Xs.array().rowwise() * x_std.transpose().array()).matrix().rowwise() +
          x_mean.transpose());
}

Eigen::VectorXd Standardization::apply_y(
    const Eigen::Ref<const Eigen::VectorXd>& y) const {
  return ((y.array() - y_mean) / y_std).matrix();
}

Eigen::VectorXd Standardization::invert_y(
    const Eigen::Ref<const Eigen::VectorXd>& ys) const {
  return (ys.array() * y_std + y_mean).matrix();
}

bool operator==(const Standardization& a, const Standardization& b) {
  return a.x_mean == b.x_mean && a.x_std == b.x_std && a.y_mean == b.y_mean &&
         a.y_std == b.y_std;
}

Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y,
                     const IngestOptions& options) {
  if (X.rows() != y.size())
    throw std::invalid_argument("dataset: X and y row counts differ");
  if (X.rows() == 0) throw std::invalid_argument("dataset: zero usable rows");
  Dataset data;
  data.standardization =
      options.reuse ? *options.reuse : Standardization::fit(X, y);
  data.X = data.standardization.apply_x(X);
  data.y = data.standardization.apply_y(y);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    data.feature_names.push_back("x" + std::to_string(j));
  data.target_name = "y";
  return data;
}

Dataset read_csv(std::istream& in, const std::string& target_column,
                 const IngestOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
  const auto header = split_line(line, options.delimiter);
  const auto cols = header.size();

  std::size_t target = cols;
  for (std::size_t j = 0; j < cols; ++j)
    if (header[j] == target_column) target = j;
  if (target == cols) {
    std::size_t idx = 0;
    const auto res = std::from_chars(
        target_column.data(), target_column.data() + target_column.size(), idx);
    if (res.ec == std::errc() &&
        res.ptr == target_column.data() + target_column.size() && idx < cols)
      target = idx;
  }
  if (target == cols)
    throw std::runtime_error("csv: no target column '" + target_column + "'");
  if (cols < 2) throw std::runtime_error("csv: need at least one feature");

  std::vector<double> values;
  std::vector<double> targets;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line, options.delimiter);
    if (cells.size() != cols) {
      ++dropped;
      continue;
    }
    std::vector<double> row;
    row.reserve(cols);
    bool ok = true;
    for (const auto& c : cells) {
      const auto v = parse_number(c);
      if (!v) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j)
      if (j == target)
        targets.push_back(row[j]);
      else
        values.push_back(row[j]);
  }
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (n == 0) throw std::runtime_error("csv: zero usable rows");
  const auto d = static_cast<Eigen::Index>(cols - 1);
  Eigen::MatrixXd X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                     Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
  if (options.reuse && options.reuse->x_mean.size() != d)
    throw std::runtime_error("csv: feature count does not match the model");

  Dataset data = make_dataset(std::move(X), std::move(y), options);
  data.feature_names.clear();
  for (std::size_t j = 0; j < cols; ++j)
    if (j != target) data.feature_names.push_back(header[j]);
  data.target_name = header[target];
  data.dropped_rows = dropped;
  return data;
}

Dataset ingest_csv(const std::string& path, const std::string& target_column,
                   const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in, target_column, options);
}

Eigen::MatrixXd read_features_csv(std::istream& in,
                                  const std::vector<std::string>& names,
                                  char delimiter) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
  const auto header = split_line(line, delimiter);
  std::vector<std::size_t> pick;
  for (const auto& name : names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("csv: missing feature column '" + name + "'");
    pick.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line, delimiter);
    if (cells.size() != header.size())
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": wrong number of cells");
    for (auto j : pick) {
      const auto v = parse_number(cells[j]);
      if (!v)
        throw std::runtime_error("csv line " + std::to_string(lineno) +
                                 ": bad value '" + cells[j] + "'");
      values.push_back(*v);
    }
  }
  const auto d = static_cast<Eigen::Index>(names.size());
  const auto n = d == 0 ? 0 : static_cast<Eigen::Index>(values.size()) / d;
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(values.data(), n, d);
}

void write_csv(std::ostream& out, const Dataset& data) {
  const Eigen::MatrixXd X = data.standardization.invert_x(data.X);
  const Eigen::VectorXd y = data.raw_y();
  for (const auto& name : data.feature_names) out << name << ',';
  out << data.target_name << '\n';
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      put(X(i, j));
      out << ',';
    }
    put(y(i));
    out << '\n';
  }
}

SyntheticData synthetic_data(Eigen::Index n, Eigen::Index d, double noise_std,
                             std::uint64_t seed, SyntheticKind kind) {
  if (n < 1 || d < 1) throw std::invalid_argument("synthetic: empty shape");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticData out;
  out.X.resize(n, d);
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.X(i, j) = unif(rng);
    double f = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double x = out.X(i, j);
      if (kind == SyntheticKind::Linear) {
        f += static_cast<double>(j + 1) / static_cast<double>(d) * x;
      } else {
        switch (j % 3) {
          case 0: f += std::sin(2.0 * x); break;
          case 1: f += 0.5 * x * x; break;
          default: f -= std::cos(1.5 * x); break;
        }
      }
    }
    if (kind == SyntheticKind::Linear) f += 0.5;
    out.y(i) = f + noise_std * noise(rng);
  }
  return out;
}

std::pair<SyntheticData, SyntheticData> split_rows(const SyntheticData& all,
                                                   Eigen::Index n_train) {
  if (n_train < 1 || n_train >= all.X.rows())
    throw std::invalid_argument("split_rows: bad split point");
  const Eigen::Index rest = all.X.rows() - n_train;
  return {{all.X.topRows(n_train), all.y.head(n_train)},
          {all.X.bottomRows(rest), all.y.tail(rest)}};
}

}  // namespace asyncgp
