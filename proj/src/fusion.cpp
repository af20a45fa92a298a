#include "aubase/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace aubase {

FeatureMatrix FeatureMatrix::select_rows(std::span<const Eigen::Index> rows_to_keep) const {
  FeatureMatrix out;
  out.values.resize(static_cast<Eigen::Index>(rows_to_keep.size()), values.cols());
  out.col_groups = col_groups;
  out.group_ids = group_ids;
  for (std::size_t i = 0; i < rows_to_keep.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows_to_keep[i]);
    out.rows.push_back(rows.at(static_cast<std::size_t>(rows_to_keep[i])));
  }
  return out;
}

StepLayout layout_for_step(std::span<const SignalRecord> records, int actuator_id) {
  StepLayout layout;
  layout.actuator_id = actuator_id;
  std::set<int> sensors;
  std::map<std::string, ExperimentChannels> experiments;
  for (const auto& rec : records) {
    if (rec.actuator_id != actuator_id) continue;
    sensors.insert(rec.sensor_id);
    auto& e = experiments[rec.experiment_id];
    if (e.channels.empty()) {
      e.meta.experiment_id = rec.experiment_id;
      e.meta.temperature_c = rec.temperature_c;
      e.meta.nominal_temperature_c = rec.nominal_temperature_c;
      e.meta.state = rec.state;
    }
    if (!e.channels.emplace(rec.sensor_id, rec.id).second)
      throw std::invalid_argument("experiment " + rec.experiment_id + " has two records for sensor " +
                                  std::to_string(rec.sensor_id));
  }
  layout.sensor_ids.assign(sensors.begin(), sensors.end());
  for (auto& [id, e] : experiments) layout.experiments.push_back(std::move(e));
  return layout;
}

FeatureMatrix unfold(const std::map<std::string, Eigen::VectorXd>& features, const StepLayout& layout) {
  if (layout.sensor_ids.empty()) throw std::invalid_argument("unfold: layout has no sensing channels");
  const auto n = static_cast<Eigen::Index>(layout.experiments.size());
  const auto s = static_cast<Eigen::Index>(layout.sensor_ids.size());

  Eigen::Index width = -1;
  FeatureMatrix out;
  out.group_ids = layout.sensor_ids;
  for (Eigen::Index row = 0; row < n; ++row) {
    const auto& exp = layout.experiments[static_cast<std::size_t>(row)];
    RowMeta meta = exp.meta;
    meta.record_ids.clear();
    for (Eigen::Index g = 0; g < s; ++g) {
      const int sensor = layout.sensor_ids[static_cast<std::size_t>(g)];
      const auto ch = exp.channels.find(sensor);
      if (ch == exp.channels.end())
        throw std::invalid_argument("unfold: experiment " + exp.meta.experiment_id + " is missing channel " +
                                    std::to_string(sensor));
      const auto f = features.find(ch->second);
      if (f == features.end())
        throw std::invalid_argument("unfold: no features for record " + ch->second + " (experiment " +
                                    exp.meta.experiment_id + ", channel " + std::to_string(sensor) + ")");
      if (width < 0) {
        width = f->second.size();
        if (width == 0) throw std::invalid_argument("unfold: empty feature vector");
        out.values.resize(n, s * width);
      } else if (f->second.size() != width) {
        throw std::invalid_argument("unfold: ragged feature length for record " + ch->second);
      }
      out.values.row(row).segment(g * width, width) = f->second.transpose();
      meta.record_ids.push_back(ch->second);
    }
    out.rows.push_back(std::move(meta));
  }
  if (width < 0) width = 0;
  out.col_groups.resize(static_cast<std::size_t>(s * width));
  for (Eigen::Index j = 0; j < s * width; ++j) out.col_groups[static_cast<std::size_t>(j)] = static_cast<int>(j / width);
  return out;
}

std::map<std::string, Eigen::VectorXd> refold(const FeatureMatrix& x) {
  std::map<std::string, Eigen::VectorXd> out;
  const Eigen::Index groups = x.n_groups();
  if (groups == 0) return out;
  const Eigen::Index width = x.n_cols() / groups;
  for (Eigen::Index r = 0; r < x.n_rows(); ++r) {
    const auto& ids = x.rows[static_cast<std::size_t>(r)].record_ids;
    for (Eigen::Index g = 0; g < groups; ++g)
      out[ids.at(static_cast<std::size_t>(g))] = x.values.row(r).segment(g * width, width).transpose();
  }
  return out;
}

Eigen::VectorXd pooled_group_std(const Eigen::MatrixXd& x, std::span<const int> col_groups, int n_groups) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n_groups);
  Eigen::VectorXi cols = Eigen::VectorXi::Zero(n_groups);
  const Eigen::RowVectorXd means = x.colwise().mean();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const int g = col_groups[static_cast<std::size_t>(j)];
    sum_sq[g] += (x.col(j).array() - means[j]).square().sum();
    cols[g] += 1;
  }
  Eigen::VectorXd out(n_groups);
  for (int g = 0; g < n_groups; ++g) out[g] = std::sqrt(sum_sq[g] / (static_cast<double>(cols[g]) * (n - 1)));
  return out;
}

ScalingParams fit_group_scaling(const Eigen::MatrixXd& x, std::span<const int> col_groups) {
  if (x.rows() < 2) throw std::invalid_argument("fit_group_scaling: need at least 2 rows");
  if (static_cast<Eigen::Index>(col_groups.size()) != x.cols())
    throw std::invalid_argument("fit_group_scaling: column grouping does not match matrix width");
  if (!x.allFinite()) throw std::invalid_argument("fit_group_scaling: non-finite values");
  const int n_groups = col_groups.empty() ? 0 : *std::max_element(col_groups.begin(), col_groups.end()) + 1;

  ScalingParams p;
  p.col_means = x.colwise().mean();
  p.col_groups.assign(col_groups.begin(), col_groups.end());
  p.group_stds = pooled_group_std(x, col_groups, n_groups);
  for (int g = 0; g < n_groups; ++g) {
    if (!(p.group_stds[g] > 0.0) || !std::isfinite(p.group_stds[g]))
      throw std::invalid_argument("fit_group_scaling: group " + std::to_string(g) + " has zero variance");
  }
  return p;
}

ScalingParams fit_group_scaling(const FeatureMatrix& x) { return fit_group_scaling(x.values, x.col_groups); }

Eigen::MatrixXd apply_scaling(const Eigen::MatrixXd& x, const ScalingParams& params) {
  if (x.cols() != params.col_means.size())
    throw std::invalid_argument("apply_scaling: width " + std::to_string(x.cols()) + " does not match model width " +
                                std::to_string(params.col_means.size()));
  Eigen::RowVectorXd inv_scale(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    inv_scale[j] = 1.0 / params.group_stds[params.col_groups[static_cast<std::size_t>(j)]];
  return (x.rowwise() - params.col_means).array().rowwise() * inv_scale.array();
}

FeatureMatrix apply_scaling(const FeatureMatrix& x, const ScalingParams& params) {
  if (x.col_groups != params.col_groups) throw std::invalid_argument("apply_scaling: column layout mismatch");
  FeatureMatrix out = x;
  out.values = apply_scaling(x.values, params);
  return out;
}

}  // namespace aubase
