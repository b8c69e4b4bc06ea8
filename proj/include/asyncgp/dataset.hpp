#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace asyncgp {

/// Per-column affine map applied to inputs and target.
/// A constant column keeps std = 1 so that it is only centred.
struct Standardization {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  static Standardization identity(Eigen::Index dim);
  static Standardization fit(const Eigen::Ref<const Eigen::MatrixXd>& X,
                             const Eigen::Ref<const Eigen::VectorXd>& y);

  Eigen::MatrixXd apply_x(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  Eigen::MatrixXd invert_x(const Eigen::Ref<const Eigen::MatrixXd>& Xs) const;
  Eigen::VectorXd apply_y(const Eigen::Ref<const Eigen::VectorXd>& y) const;
  Eigen::VectorXd invert_y(const Eigen::Ref<const Eigen::VectorXd>& ys) const;
};

bool operator==(const Standardization& a, const Standardization& b);

/// X and y are stored standardized.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name;
  Standardization standardization;
  std::size_t dropped_rows = 0;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  /// Targets in original units.
  Eigen::VectorXd raw_y() const { return standardization.invert_y(y); }
};

struct IngestOptions {
  char delimiter = ',';
  /// Apply this map (e.g. the training set's) instead of fitting one.
  std::optional<Standardization> reuse;
};

/// Reads a CSV with a header row. The target column is found by name, or by
/// zero-based index when no header cell matches. Rows with the wrong number of
/// cells, empty cells or non-finite numbers are dropped and counted.
Dataset ingest_csv(const std::string& path, const std::string& target_column,
                   const IngestOptions& options = {});
Dataset read_csv(std::istream& in, const std::string& target_column,
                 const IngestOptions& options = {});

/// Raw feature columns selected by header name, in the order of `names`.
/// Extra columns are ignored. Any unparseable cell is an error.
Eigen::MatrixXd read_features_csv(std::istream& in,
                                  const std::vector<std::string>& names,
                                  char delimiter = ',');

/// Writes X (in original units) and y with the given names.
void write_csv(std::ostream& out, const Dataset& data);

/// Builds a Dataset from raw arrays, standardizing as for ingest_csv.
Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXd y,
                     const IngestOptions& options = {});

enum class SyntheticKind { Linear, Nonlinear };

/// Seeded generator on [-2, 2]^d.
///   Linear:    y = sum_j w_j x_j + 0.5 + noise, w_j = (j + 1) / d
///   Nonlinear: y = sin(2 x_1) + 0.5 x_2^2 - cos(1.5 x_3) ... + noise
/// (the nonlinear terms cycle over the columns).
struct SyntheticData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};
SyntheticData synthetic_data(Eigen::Index n, Eigen::Index d, double noise_std,
                             std::uint64_t seed, SyntheticKind kind);

/// Contiguous split; the first n_train rows go to the first set.
std::pair<SyntheticData, SyntheticData> split_rows(const SyntheticData& all,
                                                   Eigen::Index n_train);

}  // namespace asyncgp
