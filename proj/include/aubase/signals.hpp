#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace aubase {

/// Structural condition an experiment was recorded under.
struct StructuralState {
  enum class Kind { baseline, damage };

  Kind kind = Kind::baseline;
  int index = 0;          // damage scenario / severity index, 1-based; 0 for baseline
  double severity = 0.0;  // damage echo scale (0 for baseline)

  static StructuralState baseline() { return {}; }
  static StructuralState damage(int index, double severity) { return {Kind::damage, index, severity}; }

  bool is_baseline() const { return kind == Kind::baseline; }
  /// "baseline" or "damage<k>".
  std::string label() const;
  static StructuralState parse(std::string_view label, double severity);

  friend bool operator==(const StructuralState&, const StructuralState&) = default;
};

struct SignalRecord {
  std::string id;
  std::string experiment_id;  // shared by every record of one measurement round
  int actuator_id = 0;
  int sensor_id = 0;
  double temperature_c = 0.0;          // temperature the structure actually had
  double nominal_temperature_c = 0.0;  // set point of the temperature level
  StructuralState state;
  double sample_rate_hz = 0.0;
  Eigen::VectorXd samples;

  friend bool operator==(const SignalRecord&, const SignalRecord&) = default;
};

struct Echo {
  double delay_s = 0.0;  // relative to the direct arrival of the path
  double gain = 1.0;
};

struct DamageEcho {
  double gain_per_severity = 0.02;
  double decay_length_mm = 150.0;  // scatter gain falls as exp(-excess path / decay)
};

struct ScenarioConfig {
  double carrier_hz = 50e3;
  int cycles = 5;
  double amplitude = 12.0;
  int n_transducers = 4;
  std::vector<double> temperatures_c{35, 45, 55, 65, 75};
  double sample_rate_hz = 1e6;
  int n_samples = 4096;
  double wave_speed_m_s = 1500.0;
  std::vector<std::array<double, 2>> transducer_positions_mm{{85, 415}, {85, 85}, {415, 415}, {415, 85}};
  std::vector<Echo> echoes{{0.0, 1.0},      {150e-6, 0.6},  {420e-6, 0.45},
                           {800e-6, 0.3},   {1300e-6, 0.2}, {1900e-6, 0.12}};
  double temp_stretch_per_c = 1e-3;
  double temp_gain_per_c = -3e-3;
  double temperature_jitter_c = 0.3;
  double coupling_gain_jitter = 0.0;  // relative std of a per-experiment amplitude factor
  bool include_baseline = true;
  std::vector<double> damage_severities{};
  std::vector<double> damage_temperatures_c{35};
  std::array<double, 2> damage_position_mm{125, 250};
  DamageEcho damage_echo{};
  std::optional<double> noise_snr_db = 50.0;  // nullopt: noiseless
  std::uint64_t seed = 1;
  int n_repeats = 10;

  double reference_temperature() const { return temperatures_c.front(); }
  double duration_s() const { return n_samples / sample_rate_hz; }
  /// Throws std::invalid_argument on any violated constraint.
  void validate() const;
};

/// Hann-windowed cosine burst sampled at t = k / rate for k in [0, round(cycles/carrier * rate)).
Eigen::VectorXd make_toneburst(double carrier_hz, int cycles, double amplitude, double sample_rate_hz);

/// One pitch-catch record. `temperature_c` is the physical temperature used for
/// stretching; `severity` 0 means pristine.
SignalRecord synthesize(const ScenarioConfig& config, int actuator, int sensor, double temperature_c,
                        double severity, std::mt19937_64& rng);

struct Dataset {
  ScenarioConfig scenario;
  std::vector<SignalRecord> records;
};

Dataset generate_dataset(const ScenarioConfig& config);

/// Writes `manifest.json`, `scenario.json` and `signals/<id>.csv` below `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Accepts a manifest file or a directory containing `manifest.json`.
std::vector<SignalRecord> load_dataset(const std::filesystem::path& manifest_path);

/// Derives an independent generator state from a root seed and a stream tag.
std::mt19937_64 derive_rng(std::uint64_t root_seed, std::initializer_list<std::uint64_t> stream);

}  // namespace aubase
