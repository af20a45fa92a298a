#pragma once

// Two-phase baseline selection. Phase one trains, per actuation step, a SOM on
// fused baseline features, clusters it into operating conditions and fits one
// PCA model per cluster. Phase two routes new experiments to their closest
// cluster, computes SPE per step and clusters the SPE vectors a second time.

#include "aubase/ds2l.hpp"
#include "aubase/eval.hpp"
#include "aubase/fusion.hpp"
#include "aubase/pca.hpp"
#include "aubase/signals.hpp"
#include "aubase/som.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aubase {

struct PipelineConfig {
  int grid_height = 0;  // 0: default_grid of the training size, capped by min_data_per_unit
  int grid_width = 0;
  double min_data_per_unit = 4.0;  // cap on automatic grids; 0 disables the cap
  int epochs = 50;
  double lambda_start = 0.0;  // <= 0: half the larger grid side
  double lambda_end = 0.5;
  KernelForm kernel = KernelForm::printed;
  double theta = 1.0;  // the generic clustering default (0.5) merges close temperature classes
  double min_cluster_fraction = 0.05;  // smaller clusters are absorbed by their neighbours
  double bandwidth = 0.0;  // <= 0: mean nearest-neighbour weight distance
  double variance_threshold = 0.95;
  double train_frac = 0.70;
  double novelty_percentile = 0.95;
  double spe_percentile = 0.95;
  int max_level = 0;  // 0: band_limited_max_level(sample rate, carrier_hz)
  double carrier_hz = 50e3;
  int second_grid = 0;  // side of the second-level map, 0: automatic
  double second_min_data_per_unit = 8.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ClusterModel {
  int cluster = 0;
  int n_train = 0;
  std::optional<PcaModel> pca;  // absent for clusters with fewer than 2 members
  double q95 = 0.0;             // novelty threshold on BMU quantization error
  double spe_threshold = 0.0;
};

struct StepBank {
  int actuator_id = 0;
  std::vector<int> sensor_ids;
  SomModel som;
  ClusterPartition partition;
  std::vector<ClusterModel> clusters;  // indexed by cluster id
  std::vector<std::string> train_experiments;
  double validation_novelty_rate = 0.0;
};

struct Selection {
  int cluster = -1;      // cluster of the BMU, -1 if the BMU represents no training data
  int model_cluster = -1;  // cluster whose PCA model scores the row
  bool novel = false;
  Eigen::Index bmu = -1;
  double quantization_error = 0.0;
};

struct SpeVector {
  std::string experiment_id;
  StructuralState state;
  double nominal_temperature_c = 0.0;
  std::vector<double> spe;             // one entry per step
  std::vector<double> normalized_spe;  // spe / spe_threshold of the scoring cluster
  std::vector<int> selected_cluster;   // -1 when the BMU is unassigned
  std::vector<bool> novel;

  bool any_novel() const;
  /// Maximum normalized SPE over steps, +inf when any step is novel.
  double damage_score() const;
};

struct BaselineBank {
  PipelineConfig config;
  int level = 0;
  std::vector<StepBank> steps;
  std::vector<std::string> train_experiments;
  std::vector<std::string> validation_experiments;
  std::vector<SpeVector> validation_spe;

  const StepBank& step(int actuator_id) const;
};

/// Automatic square grid: default_grid(n), shrunk so that the map has at least
/// `min_data_per_unit` data per unit on average (side >= 2).
std::pair<int, int> pipeline_grid(Eigen::Index n, double min_data_per_unit);

/// Experiment ids sorted then split per (state, nominal temperature) stratum
/// with a seeded shuffle; returns {train, validation}.
std::pair<std::vector<std::string>, std::vector<std::string>> split_experiments(
    std::span<const SignalRecord> records, double train_frac, std::uint64_t seed);

/// Minimum-entropy level over the training records, capped by the band limit.
int choose_level(std::span<const SignalRecord> records, const PipelineConfig& config);

/// Fused features of one actuation step at the given wavelet level.
FeatureMatrix step_features(std::span<const SignalRecord> records, int actuator_id, int level);

BaselineBank train_phase1(std::span<const SignalRecord> baseline_records, const PipelineConfig& config);

/// Throws std::invalid_argument on a feature width mismatch.
Selection select_baseline(const StepBank& step, const Eigen::RowVectorXd& feature_row);

/// SPE of a raw fused row against the selection's scoring model.
double selection_spe(const StepBank& step, const Selection& sel, const Eigen::RowVectorXd& feature_row);

struct ExperimentResult {
  std::string experiment_id;
  StructuralState state;
  double nominal_temperature_c = 0.0;
  bool incomplete = false;
  std::vector<int> missing_steps;
  std::string decision;  // "baseline", "damage", "novel" or "incomplete"
  SpeVector spe;
  int second_level_cluster = -1;
  std::string second_level_label;  // majority state in evaluation mode, else "c<k>"
};

struct DetectionReport {
  std::vector<ExperimentResult> experiments;  // ordered by experiment id
  int second_level_k = 0;
  std::vector<int> validation_labels;  // second-level label of each bank validation vector
  std::map<int, std::string> cluster_names;
};

struct DetectOptions {
  bool evaluation_mode = true;
  bool second_level = true;
};

/// Rows of the second-level input: log(1 + normalized SPE) per step.
Eigen::MatrixXd second_level_input(std::span<const SpeVector> vectors);

DetectionReport detect(const BaselineBank& bank, std::span<const SignalRecord> records,
                       const DetectOptions& options = {});

struct StepComparison {
  int actuator_id = 0;
  Eigen::Index monolithic_r = 0;
  Eigen::Index proposed_r = 0;  // largest retained count over the step's cluster models
  std::vector<Eigen::Index> cluster_r;
  double auc_proposed = 0.0;
  double auc_monolithic = 0.0;
  double fpr_proposed = 0.0;  // at the first operating point reaching the target TPR
  double fpr_monolithic = 0.0;
  double fpr_proposed_calibrated = 0.0;  // decision threshold from training percentiles
  double fpr_monolithic_calibrated = 0.0;
  RocCurve roc_proposed;
  RocCurve roc_monolithic;
  std::vector<double> scores_proposed;  // per test row, +inf when novel
  std::vector<double> scores_monolithic;
  std::vector<bool> labels;  // true for damage
};

struct ComparisonReport {
  double tpr_target = 0.95;
  std::vector<StepComparison> steps;
  double auc_proposed_combined = 0.0;
  double auc_monolithic_combined = 0.0;
  int n_pos = 0;
  int n_neg = 0;
};

/// Trains the bank and one all-condition PCA per step on the same training
/// split, then scores validation baselines (negatives) and damage records
/// (positives) with both.
ComparisonReport compare_monolithic(std::span<const SignalRecord> records, const PipelineConfig& config,
                                    double tpr_target = 0.95);

/// Same comparison against an already trained bank. Baseline experiments in the
/// bank's training split train the monolithic model; every other baseline
/// experiment is a negative and every damage experiment a positive.
ComparisonReport compare_monolithic(const BaselineBank& bank, std::span<const SignalRecord> records,
                                    double tpr_target = 0.95);

}  // namespace aubase
