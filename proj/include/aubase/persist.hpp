#pragma once

// JSON forms of configs, models and reports, and the on-disk bank layout:
// `index.json` plus one JSON file per SOM and per PCA model.

#include "aubase/pipeline.hpp"
#include "aubase/text_io.hpp"

#include "json.hpp"

#include <filesystem>

namespace aubase {

inline constexpr int kSchemeVersion = 1;

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PcaModel& m);
PcaModel pca_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SomModel& m);
SomModel som_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ClusterPartition& p);
ClusterPartition partition_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SpeVector& v);
SpeVector spe_vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DetectionReport& r);
nlohmann::json to_json(const ComparisonReport& r);

void save_bank(const BaselineBank& bank, const std::filesystem::path& dir);
BaselineBank load_bank(const std::filesystem::path& dir);

}  // namespace aubase
