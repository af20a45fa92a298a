#include "aubase/signals.hpp"

#include "aubase/error.hpp"
#include "aubase/persist.hpp"
#include "aubase/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace aubase {

namespace {

constexpr double kReferencePathMm = 330.0;

double hann_cosine(double tau, double burst_s, double carrier_hz) {
  if (tau < 0.0 || tau >= burst_s) return 0.0;
  const double window = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * tau / burst_s));
  return window * std::cos(2.0 * std::numbers::pi * carrier_hz * tau);
}

double distance_mm(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// Adds gain * burst(t - arrival) for every sample the burst touches.
void add_burst(Eigen::VectorXd& out, double arrival_s, double gain, const ScenarioConfig& c) {
  const double burst_s = c.cycles / c.carrier_hz;
  const double fs = c.sample_rate_hz;
  const auto first = static_cast<Eigen::Index>(std::max(0.0, std::ceil(arrival_s * fs)));
  const auto last = std::min<Eigen::Index>(out.size() - 1,
                                           static_cast<Eigen::Index>(std::floor((arrival_s + burst_s) * fs)));
  for (Eigen::Index k = first; k <= last; ++k) {
    out[k] += gain * hann_cosine(static_cast<double>(k) / fs - arrival_s, burst_s, c.carrier_hz);
  }
}

std::string format_temperature(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

std::string StructuralState::label() const {
  return is_baseline() ? std::string("baseline") : "damage" + std::to_string(index);
}

StructuralState StructuralState::parse(std::string_view label, double severity) {
  if (label == "baseline") return baseline();
  if (label.starts_with("damage") && label.size() > 6) {
    int k = 0;
    for (char ch : label.substr(6)) {
      if (ch < '0' || ch > '9') throw DataError("invalid state label '" + std::string(label) + "'");
      k = 10 * k + (ch - '0');
    }
    if (k >= 1) return damage(k, severity);
  }
  throw DataError("invalid state label '" + std::string(label) + "'");
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scenario: " + what); };
  if (!(carrier_hz > 0.0)) fail("carrier_hz must be positive");
  if (cycles < 1) fail("cycles must be >= 1");
  if (!(sample_rate_hz >= 10.0 * carrier_hz)) fail("sample_rate_hz must be >= 10 x carrier_hz");
  if (n_samples < 2) fail("n_samples must be >= 2");
  if (n_transducers < 2) fail("n_transducers must be >= 2");
  if (static_cast<int>(transducer_positions_mm.size()) != n_transducers)
    fail("transducer_positions_mm must list one position per transducer");
  if (temperatures_c.empty()) fail("temperatures_c is empty");
  for (std::size_t i = 1; i < temperatures_c.size(); ++i)
    if (!(temperatures_c[i] > temperatures_c[i - 1])) fail("temperatures_c must be strictly increasing");
  if (!(wave_speed_m_s > 0.0)) fail("wave_speed_m_s must be positive");
  for (const auto& e : echoes)
    if (!(e.delay_s >= 0.0 && e.delay_s < duration_s())) fail("echo delay outside [0, duration)");
  if (echoes.empty()) fail("echoes is empty");
  if (!(temp_stretch_per_c >= 0.0)) fail("temp_stretch_per_c must be >= 0");
  if (!(temperature_jitter_c >= 0.0)) fail("temperature_jitter_c must be >= 0");
  if (!(coupling_gain_jitter >= 0.0 && coupling_gain_jitter < 0.2)) fail("coupling_gain_jitter must lie in [0, 0.2)");
  if (!(damage_echo.decay_length_mm > 0.0)) fail("damage_echo.decay_length_mm must be positive");
  for (double s : damage_severities)
    if (!(s >= 0.0)) fail("damage severities must be >= 0");
  if (!damage_severities.empty()) {
    for (double t : damage_temperatures_c)
      if (t < temperatures_c.front() - 10.0 || t > temperatures_c.back() + 10.0)
        fail("damage temperature outside scenario range +/- 10 C");
    if (damage_temperatures_c.empty()) fail("damage_temperatures_c is empty");
  }
  if (!include_baseline && damage_severities.empty()) fail("scenario produces no records");
  if (n_repeats < 1) fail("n_repeats must be >= 1");
}

Eigen::VectorXd make_toneburst(double carrier_hz, int cycles, double amplitude, double sample_rate_hz) {
  if (!(carrier_hz > 0.0)) throw std::invalid_argument("make_toneburst: carrier must be positive");
  if (cycles < 1) throw std::invalid_argument("make_toneburst: cycles must be >= 1");
  if (!(sample_rate_hz >= 10.0 * carrier_hz))
    throw std::invalid_argument("make_toneburst: sample rate below 10 x carrier");
  const double burst_s = cycles / carrier_hz;
  const auto n = static_cast<Eigen::Index>(std::lround(burst_s * sample_rate_hz));
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k)
    out[k] = amplitude * hann_cosine(static_cast<double>(k) / sample_rate_hz, burst_s, carrier_hz);
  return out;
}

SignalRecord synthesize(const ScenarioConfig& c, int actuator, int sensor, double temperature_c,
                        double severity, std::mt19937_64& rng) {
  if (actuator < 1 || actuator > c.n_transducers || sensor < 1 || sensor > c.n_transducers ||
      actuator == sensor) {
    throw std::invalid_argument("synthesize: unknown transducer pair " + std::to_string(actuator) + "-" +
                                std::to_string(sensor));
  }
  const double t_ref = c.reference_temperature();
  if (temperature_c < c.temperatures_c.front() - 10.0 || temperature_c > c.temperatures_c.back() + 10.0)
    throw std::invalid_argument("synthesize: temperature outside scenario range");

  const double dt = temperature_c - t_ref;
  const double stretch = 1.0 + c.temp_stretch_per_c * dt;
  const double gain_t = 1.0 + c.temp_gain_per_c * dt;

  const auto& pa = c.transducer_positions_mm[actuator - 1];
  const auto& ps = c.transducer_positions_mm[sensor - 1];
  const double path_mm = distance_mm(pa, ps);
  const double direct_s = path_mm * 1e-3 / c.wave_speed_m_s;
  const double path_gain = std::sqrt(kReferencePathMm / path_mm);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(c.n_samples);
  for (const auto& e : c.echoes) {
    add_burst(x, (direct_s + e.delay_s) * stretch, c.amplitude * gain_t * path_gain * e.gain, c);
  }
  if (severity != 0.0) {
    const double via_mm = distance_mm(pa, c.damage_position_mm) + distance_mm(c.damage_position_mm, ps);
    const double excess_mm = via_mm - path_mm;
    const double scatter_gain =
        c.damage_echo.gain_per_severity * severity * std::exp(-excess_mm / c.damage_echo.decay_length_mm);
    add_burst(x, via_mm * 1e-3 / c.wave_speed_m_s * stretch, c.amplitude * gain_t * scatter_gain, c);
  }
  if (c.noise_snr_db) {
    const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
    const double sigma = rms / std::pow(10.0, *c.noise_snr_db / 20.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += sigma * noise(rng);
  }

  SignalRecord rec;
  rec.actuator_id = actuator;
  rec.sensor_id = sensor;
  rec.temperature_c = temperature_c;
  rec.nominal_temperature_c = temperature_c;
  rec.sample_rate_hz = c.sample_rate_hz;
  rec.samples = std::move(x);
  return rec;
}

std::mt19937_64 derive_rng(std::uint64_t root_seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(root_seed),
                                   static_cast<std::uint32_t>(root_seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Dataset generate_dataset(const ScenarioConfig& config) {
  config.validate();
  struct Group {
    StructuralState state;
    std::vector<double> temperatures;
  };
  std::vector<Group> groups;
  if (config.include_baseline) groups.push_back({StructuralState::baseline(), config.temperatures_c});
  for (std::size_t k = 0; k < config.damage_severities.size(); ++k) {
    groups.push_back({StructuralState::damage(static_cast<int>(k) + 1, config.damage_severities[k]),
                      config.damage_temperatures_c});
  }

  Dataset out{config, {}};
  const int p = config.n_transducers;
  out.records.reserve(groups.size() * config.temperatures_c.size() * config.n_repeats * p * (p - 1));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    for (std::size_t ti = 0; ti < group.temperatures.size(); ++ti) {
      const double nominal = group.temperatures[ti];
      for (int r = 0; r < config.n_repeats; ++r) {
        auto rng = derive_rng(config.seed, {g, ti, static_cast<std::uint64_t>(r)});
        std::normal_distribution<double> jitter(0.0, 1.0);
        const double temperature = nominal + config.temperature_jitter_c * jitter(rng);
        const double coupling = 1.0 + config.coupling_gain_jitter * jitter(rng);
        char repeat[16];
        std::snprintf(repeat, sizeof repeat, "%03d", r);
        const std::string experiment =
            group.state.label() + "_T" + format_temperature(nominal) + "_r" + repeat;
        for (int a = 1; a <= p; ++a) {
          for (int s = 1; s <= p; ++s) {
            if (s == a) continue;
            auto rec = synthesize(config, a, s, temperature, group.state.severity, rng);
            rec.samples *= coupling;
            rec.id = experiment + "_a" + std::to_string(a) + "s" + std::to_string(s);
            rec.experiment_id = experiment;
            rec.nominal_temperature_c = nominal;
            rec.state = group.state;
            out.records.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "signals");
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& rec : dataset.records) {
    const std::string rel = "signals/" + rec.id + ".csv";
    write_column_csv(dir / rel, rec.samples);
    manifest.push_back({{"id", rec.id},
                        {"experiment_id", rec.experiment_id},
                        {"actuator_id", rec.actuator_id},
                        {"sensor_id", rec.sensor_id},
                        {"temperature_c", rec.temperature_c},
                        {"nominal_temperature_c", rec.nominal_temperature_c},
                        {"state", rec.state.label()},
                        {"severity", rec.state.severity},
                        {"sample_rate_hz", rec.sample_rate_hz},
                        {"n_samples", rec.samples.size()},
                        {"path", rel}});
  }
  write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
  write_text_file(dir / "scenario.json", to_json(dataset.scenario).dump(1) + "\n");
}

std::vector<SignalRecord> load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  fs::path manifest_file = manifest_path;
  if (fs::is_directory(manifest_file)) manifest_file /= "manifest.json";
  const nlohmann::json manifest = read_json_file(manifest_file);
  if (!manifest.is_array()) throw DataError(manifest_file.string() + ": manifest must be a JSON array");
  const fs::path base = manifest_file.parent_path();

  std::vector<SignalRecord> records;
  records.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& row = manifest[i];
    std::string id = "#" + std::to_string(i);
    try {
      id = row.at("id").get<std::string>();
      SignalRecord rec;
      rec.id = id;
      rec.experiment_id = row.at("experiment_id").get<std::string>();
      rec.actuator_id = row.at("actuator_id").get<int>();
      rec.sensor_id = row.at("sensor_id").get<int>();
      rec.temperature_c = row.at("temperature_c").get<double>();
      rec.nominal_temperature_c = row.value("nominal_temperature_c", rec.temperature_c);
      rec.state = StructuralState::parse(row.at("state").get<std::string>(), row.at("severity").get<double>());
      rec.sample_rate_hz = row.at("sample_rate_hz").get<double>();
      const auto n = row.at("n_samples").get<Eigen::Index>();
      if (rec.actuator_id == rec.sensor_id || rec.actuator_id < 1 || rec.sensor_id < 1)
        throw DataError("invalid actuator/sensor pair");
      if (!(rec.sample_rate_hz > 0.0)) throw DataError("sample_rate_hz must be positive");
      const fs::path signal = base / row.at("path").get<std::string>();
      if (!fs::exists(signal)) throw DataError("missing signal file " + signal.string());
      rec.samples = read_column_csv(signal);
      if (rec.samples.size() != n)
        throw DataError("sample count mismatch: manifest says " + std::to_string(n) + ", file has " +
                        std::to_string(rec.samples.size()));
      if (n < 2) throw DataError("fewer than 2 samples");
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("record " + id + ": malformed manifest row (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError("record " + id + ": " + e.what());
    }
  }
  return records;
}

}  // namespace aubase
