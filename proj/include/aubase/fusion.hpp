#pragma once

#include "aubase/signals.hpp"

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace aubase {

struct RowMeta {
  std::string experiment_id;
  double temperature_c = 0.0;
  double nominal_temperature_c = 0.0;
  StructuralState state;
  std::vector<std::string> record_ids;  // one per channel, in column-group order
};

/// Unfolded feature matrix: one row per experiment, channels concatenated.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<int> col_groups;  // group index (0-based) of every column
  std::vector<int> group_ids;   // sensor id of every group
  std::vector<RowMeta> rows;

  Eigen::Index n_rows() const { return values.rows(); }
  Eigen::Index n_cols() const { return values.cols(); }
  int n_groups() const { return static_cast<int>(group_ids.size()); }

  /// Sub-matrix restricted to the given rows, columns and grouping preserved.
  FeatureMatrix select_rows(std::span<const Eigen::Index> rows) const;
};

/// Record ids of one experiment for one actuation step, keyed by sensor id.
struct ExperimentChannels {
  RowMeta meta;
  std::map<int, std::string> channels;
};

/// Which sensors sense during one actuation step, and the experiments to unfold.
struct StepLayout {
  int actuator_id = 0;
  std::vector<int> sensor_ids;  // ascending
  std::vector<ExperimentChannels> experiments;
};

/// Builds the layout of one actuation step from records; experiments ordered by id.
StepLayout layout_for_step(std::span<const SignalRecord> records, int actuator_id);

/// Concatenates each experiment's channel features (sensor ids ascending).
FeatureMatrix unfold(const std::map<std::string, Eigen::VectorXd>& features, const StepLayout& layout);

/// Inverse of `unfold`: record id -> channel features.
std::map<std::string, Eigen::VectorXd> refold(const FeatureMatrix& x);

/// Column means and one pooled standard deviation per channel group.
struct ScalingParams {
  Eigen::RowVectorXd col_means;
  Eigen::VectorXd group_stds;
  std::vector<int> col_groups;
};

ScalingParams fit_group_scaling(const Eigen::MatrixXd& x, std::span<const int> col_groups);
ScalingParams fit_group_scaling(const FeatureMatrix& x);

/// (x_ij - mean_j) / std(group(j)) for every row of `x`.
Eigen::MatrixXd apply_scaling(const Eigen::MatrixXd& x, const ScalingParams& params);
FeatureMatrix apply_scaling(const FeatureMatrix& x, const ScalingParams& params);

/// Pooled sample standard deviation of each group's column-centered entries.
Eigen::VectorXd pooled_group_std(const Eigen::MatrixXd& x, std::span<const int> col_groups, int n_groups);

}  // namespace aubase
