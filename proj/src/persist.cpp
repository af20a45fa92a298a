#include "aubase/persist.hpp"

#include "aubase/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace aubase {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw DataError("not a number: '" + std::string(text) + "'");
  return v;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(1) + "\n");
}

void write_column_csv(const std::filesystem::path& path, const Eigen::VectorXd& values) {
  std::string out;
  out.reserve(static_cast<std::size_t>(values.size()) * 24);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    out += format_double(values[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

Eigen::VectorXd read_column_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<double> values;
  std::size_t pos = 0;
  std::size_t line = 1;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view row(text.data() + pos, end - pos);
    if (!row.empty() && row != "\r") {
      try {
        const double v = parse_double(row);
        if (!std::isfinite(v)) throw DataError("non-finite sample");
        values.push_back(v);
      } catch (const DataError& e) {
        throw DataError(path.string() + " line " + std::to_string(line) + ": " + e.what());
      }
    }
    pos = end + 1;
    ++line;
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
void optional_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = field<T>(j, key);
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string kernel_name(KernelForm k) { return k == KernelForm::gaussian ? "gaussian" : "printed"; }

KernelForm kernel_from(const std::string& s) {
  if (s == "printed") return KernelForm::printed;
  if (s == "gaussian") return KernelForm::gaussian;
  throw DataError("unknown kernel '" + s + "'");
}

void check_scheme(const json& j, const std::string& what) {
  if (!j.is_object()) throw DataError(what + ": expected a JSON object");
  if (j.contains("scheme_version") && j.at("scheme_version") != kSchemeVersion)
    throw DataError(what + ": unsupported scheme_version");
}

}  // namespace

json to_json(const ScenarioConfig& c) {
  json echoes = json::array();
  for (const auto& e : c.echoes) echoes.push_back({{"delay_s", e.delay_s}, {"gain", e.gain}});
  json positions = json::array();
  for (const auto& p : c.transducer_positions_mm) positions.push_back({p[0], p[1]});
  return {{"carrier_hz", c.carrier_hz},
          {"cycles", c.cycles},
          {"amplitude", c.amplitude},
          {"n_transducers", c.n_transducers},
          {"temperatures_c", c.temperatures_c},
          {"sample_rate_hz", c.sample_rate_hz},
          {"n_samples", c.n_samples},
          {"wave_speed_m_s", c.wave_speed_m_s},
          {"transducer_positions_mm", positions},
          {"echoes", echoes},
          {"temp_stretch_per_c", c.temp_stretch_per_c},
          {"temp_gain_per_c", c.temp_gain_per_c},
          {"temperature_jitter_c", c.temperature_jitter_c},
          {"coupling_gain_jitter", c.coupling_gain_jitter},
          {"include_baseline", c.include_baseline},
          {"damage_severities", c.damage_severities},
          {"damage_temperatures_c", c.damage_temperatures_c},
          {"damage_position_mm", {c.damage_position_mm[0], c.damage_position_mm[1]}},
          {"damage_echo",
           {{"gain_per_severity", c.damage_echo.gain_per_severity},
            {"decay_length_mm", c.damage_echo.decay_length_mm}}},
          {"noise_snr_db", c.noise_snr_db ? json(*c.noise_snr_db) : json(nullptr)},
          {"seed", c.seed},
          {"n_repeats", c.n_repeats}};
}

ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw DataError("scenario: expected a JSON object");
  static const std::set<std::string> known{"carrier_hz", "cycles", "amplitude", "n_transducers", "temperatures_c",
                                           "sample_rate_hz", "n_samples", "wave_speed_m_s",
                                           "transducer_positions_mm", "echoes", "temp_stretch_per_c",
                                           "temp_gain_per_c", "temperature_jitter_c", "coupling_gain_jitter", "include_baseline",
                                           "damage_severities", "damage_temperatures_c", "damage_position_mm",
                                           "damage_echo", "noise_snr_db", "seed", "n_repeats"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("scenario: unknown field '" + key + "'");

  ScenarioConfig c;
  optional_field(j, "carrier_hz", c.carrier_hz);
  optional_field(j, "cycles", c.cycles);
  optional_field(j, "amplitude", c.amplitude);
  optional_field(j, "n_transducers", c.n_transducers);
  optional_field(j, "temperatures_c", c.temperatures_c);
  optional_field(j, "sample_rate_hz", c.sample_rate_hz);
  optional_field(j, "n_samples", c.n_samples);
  optional_field(j, "wave_speed_m_s", c.wave_speed_m_s);
  if (j.contains("transducer_positions_mm")) {
    c.transducer_positions_mm.clear();
    for (const auto& p : j.at("transducer_positions_mm")) {
      const auto xy = p.get<std::vector<double>>();
      if (xy.size() != 2) throw DataError("scenario: transducer position must have 2 coordinates");
      c.transducer_positions_mm.push_back({xy[0], xy[1]});
    }
  }
  if (j.contains("echoes")) {
    c.echoes.clear();
    for (const auto& e : j.at("echoes")) c.echoes.push_back({field<double>(e, "delay_s"), field<double>(e, "gain")});
  }
  optional_field(j, "temp_stretch_per_c", c.temp_stretch_per_c);
  optional_field(j, "temp_gain_per_c", c.temp_gain_per_c);
  optional_field(j, "temperature_jitter_c", c.temperature_jitter_c);
  optional_field(j, "coupling_gain_jitter", c.coupling_gain_jitter);
  optional_field(j, "include_baseline", c.include_baseline);
  optional_field(j, "damage_severities", c.damage_severities);
  optional_field(j, "damage_temperatures_c", c.damage_temperatures_c);
  if (j.contains("damage_position_mm")) {
    const auto xy = j.at("damage_position_mm").get<std::vector<double>>();
    if (xy.size() != 2) throw DataError("scenario: damage position must have 2 coordinates");
    c.damage_position_mm = {xy[0], xy[1]};
  }
  if (j.contains("damage_echo")) {
    const auto& d = j.at("damage_echo");
    optional_field(d, "gain_per_severity", c.damage_echo.gain_per_severity);
    optional_field(d, "decay_length_mm", c.damage_echo.decay_length_mm);
  }
  if (j.contains("noise_snr_db")) {
    if (j.at("noise_snr_db").is_null())
      c.noise_snr_db.reset();
    else
      c.noise_snr_db = field<double>(j, "noise_snr_db");
  }
  optional_field(j, "seed", c.seed);
  optional_field(j, "n_repeats", c.n_repeats);
  return c;
}

json to_json(const PipelineConfig& c) {
  return {{"grid_height", c.grid_height},
          {"grid_width", c.grid_width},
          {"min_data_per_unit", c.min_data_per_unit},
          {"epochs", c.epochs},
          {"lambda_start", c.lambda_start},
          {"lambda_end", c.lambda_end},
          {"kernel", kernel_name(c.kernel)},
          {"theta", c.theta},
          {"min_cluster_fraction", c.min_cluster_fraction},
          {"bandwidth", c.bandwidth},
          {"variance_threshold", c.variance_threshold},
          {"train_frac", c.train_frac},
          {"novelty_percentile", c.novelty_percentile},
          {"spe_percentile", c.spe_percentile},
          {"max_level", c.max_level},
          {"carrier_hz", c.carrier_hz},
          {"second_grid", c.second_grid},
          {"second_min_data_per_unit", c.second_min_data_per_unit},
          {"seed", c.seed}};
}

PipelineConfig pipeline_from_json(const json& j) {
  if (!j.is_object()) throw DataError("pipeline config: expected a JSON object");
  const json defaults = to_json(PipelineConfig{});
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw DataError("pipeline config: unknown field '" + key + "'");
  PipelineConfig c;
  optional_field(j, "grid_height", c.grid_height);
  optional_field(j, "grid_width", c.grid_width);
  optional_field(j, "min_data_per_unit", c.min_data_per_unit);
  optional_field(j, "epochs", c.epochs);
  optional_field(j, "lambda_start", c.lambda_start);
  optional_field(j, "lambda_end", c.lambda_end);
  if (j.contains("kernel")) c.kernel = kernel_from(field<std::string>(j, "kernel"));
  optional_field(j, "theta", c.theta);
  optional_field(j, "min_cluster_fraction", c.min_cluster_fraction);
  optional_field(j, "bandwidth", c.bandwidth);
  optional_field(j, "variance_threshold", c.variance_threshold);
  optional_field(j, "train_frac", c.train_frac);
  optional_field(j, "novelty_percentile", c.novelty_percentile);
  optional_field(j, "spe_percentile", c.spe_percentile);
  optional_field(j, "max_level", c.max_level);
  optional_field(j, "carrier_hz", c.carrier_hz);
  optional_field(j, "second_grid", c.second_grid);
  optional_field(j, "second_min_data_per_unit", c.second_min_data_per_unit);
  optional_field(j, "seed", c.seed);
  return c;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = field<Eigen::Index>(j, "rows");
  const auto cols = field<Eigen::Index>(j, "cols");
  const auto& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows)
    throw DataError("matrix: row count does not match data");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError("matrix: ragged row " + std::to_string(r));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json to_json(const PcaModel& m) {
  return {{"scheme_version", kSchemeVersion},
          {"kind", "pca"},
          {"col_means", vector_json(m.scaling.col_means.transpose())},
          {"group_stds", vector_json(m.scaling.group_stds)},
          {"col_groups", m.scaling.col_groups},
          {"loadings", to_json(m.loadings)},
          {"eigvals", vector_json(m.eigvals)},
          {"retained", m.retained},
          {"variance_threshold", m.variance_threshold},
          {"trained_n", m.trained_n}};
}

PcaModel pca_from_json(const json& j) {
  check_scheme(j, "pca model");
  PcaModel m;
  m.scaling.col_means = vector_from(j.at("col_means")).transpose();
  m.scaling.group_stds = vector_from(j.at("group_stds"));
  m.scaling.col_groups = field<std::vector<int>>(j, "col_groups");
  m.loadings = matrix_from_json(j.at("loadings"));
  m.eigvals = vector_from(j.at("eigvals"));
  m.retained = field<Eigen::Index>(j, "retained");
  m.variance_threshold = field<double>(j, "variance_threshold");
  m.trained_n = field<Eigen::Index>(j, "trained_n");
  if (m.loadings.cols() != m.retained || m.loadings.rows() != m.width() ||
      static_cast<Eigen::Index>(m.scaling.col_groups.size()) != m.width())
    throw DataError("pca model: inconsistent dimensions");
  return m;
}

json to_json(const SomModel& m) {
  return {{"scheme_version", kSchemeVersion},
          {"kind", "som"},
          {"height", m.height},
          {"width", m.width},
          {"weights", to_json(m.weights)},
          {"trained_epochs", m.trained_epochs},
          {"lambda_start", m.schedule.start},
          {"lambda_end", m.schedule.end},
          {"kernel", kernel_name(m.kernel)}};
}

SomModel som_from_json(const json& j) {
  check_scheme(j, "som model");
  SomModel m;
  m.height = field<int>(j, "height");
  m.width = field<int>(j, "width");
  m.weights = matrix_from_json(j.at("weights"));
  if (m.height < 1 || m.width < 1 || m.weights.rows() != static_cast<Eigen::Index>(m.height) * m.width)
    throw DataError("som model: weights do not match the grid");
  m.positions.resize(m.weights.rows(), 2);
  for (Eigen::Index i = 0; i < m.weights.rows(); ++i) {
    m.positions(i, 0) = static_cast<double>(i / m.width);
    m.positions(i, 1) = static_cast<double>(i % m.width);
  }
  m.trained_epochs = field<int>(j, "trained_epochs");
  m.schedule = {field<double>(j, "lambda_start"), field<double>(j, "lambda_end")};
  m.kernel = kernel_from(field<std::string>(j, "kernel"));
  return m;
}

json to_json(const ClusterPartition& p) {
  std::vector<long> modes(p.mode_units.begin(), p.mode_units.end());
  return {{"k", p.k}, {"unit_label", p.unit_label}, {"datum_label", p.datum_label}, {"mode_units", modes}};
}

ClusterPartition partition_from_json(const json& j) {
  ClusterPartition p;
  p.k = field<int>(j, "k");
  p.unit_label = field<std::vector<int>>(j, "unit_label");
  p.datum_label = field<std::vector<int>>(j, "datum_label");
  for (long u : field<std::vector<long>>(j, "mode_units")) p.mode_units.push_back(u);
  return p;
}

json to_json(const SpeVector& v) {
  return {{"experiment_id", v.experiment_id},
          {"state", v.state.label()},
          {"severity", v.state.severity},
          {"nominal_temperature_c", v.nominal_temperature_c},
          {"spe", v.spe},
          {"normalized_spe", v.normalized_spe},
          {"selected_cluster", v.selected_cluster},
          {"novel", v.novel}};
}

SpeVector spe_vector_from_json(const json& j) {
  SpeVector v;
  v.experiment_id = field<std::string>(j, "experiment_id");
  v.state = StructuralState::parse(field<std::string>(j, "state"), field<double>(j, "severity"));
  v.nominal_temperature_c = field<double>(j, "nominal_temperature_c");
  v.spe = field<std::vector<double>>(j, "spe");
  v.normalized_spe = field<std::vector<double>>(j, "normalized_spe");
  v.selected_cluster = field<std::vector<int>>(j, "selected_cluster");
  v.novel = field<std::vector<bool>>(j, "novel");
  return v;
}

json to_json(const DetectionReport& r) {
  json exps = json::array();
  for (const auto& e : r.experiments) {
    json x = {{"experiment_id", e.experiment_id},
              {"state", e.state.label()},
              {"nominal_temperature_c", e.nominal_temperature_c},
              {"decision", e.decision},
              {"incomplete", e.incomplete}};
    if (e.incomplete) {
      x["missing_steps"] = e.missing_steps;
    } else {
      x["spe"] = to_json(e.spe);
      x["second_level_cluster"] = e.second_level_cluster;
      x["second_level_label"] = e.second_level_label;
    }
    exps.push_back(std::move(x));
  }
  json names = json::object();
  for (const auto& [c, name] : r.cluster_names) names[std::to_string(c)] = name;
  return {{"scheme_version", kSchemeVersion},
          {"experiments", exps},
          {"second_level_k", r.second_level_k},
          {"cluster_names", names},
          {"validation_labels", r.validation_labels}};
}

json to_json(const ComparisonReport& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"actuator_id", s.actuator_id},
                     {"monolithic_r", s.monolithic_r},
                     {"proposed_r", s.proposed_r},
                     {"cluster_r", s.cluster_r},
                     {"auc_proposed", s.auc_proposed},
                     {"auc_monolithic", s.auc_monolithic},
                     {"fpr_proposed", s.fpr_proposed},
                     {"fpr_monolithic", s.fpr_monolithic},
                     {"fpr_proposed_calibrated", s.fpr_proposed_calibrated},
                     {"fpr_monolithic_calibrated", s.fpr_monolithic_calibrated}});
  }
  return {{"scheme_version", kSchemeVersion},
          {"tpr_target", r.tpr_target},
          {"n_pos", r.n_pos},
          {"n_neg", r.n_neg},
          {"auc_proposed_combined", r.auc_proposed_combined},
          {"auc_monolithic_combined", r.auc_monolithic_combined},
          {"steps", steps}};
}

void save_bank(const BaselineBank& bank, const std::filesystem::path& dir) {
  json steps = json::array();
  for (const auto& s : bank.steps) {
    const std::string som_file = "step" + std::to_string(s.actuator_id) + "_som.json";
    write_json_file(dir / som_file, to_json(s.som));
    json clusters = json::array();
    for (const auto& c : s.clusters) {
      json cj = {{"cluster", c.cluster}, {"n_train", c.n_train}, {"q95", c.q95}, {"spe_threshold", c.spe_threshold}};
      if (c.pca) {
        const std::string pca_file =
            "step" + std::to_string(s.actuator_id) + "_cluster" + std::to_string(c.cluster) + "_pca.json";
        write_json_file(dir / pca_file, to_json(*c.pca));
        cj["pca"] = pca_file;
      } else {
        cj["pca"] = nullptr;
      }
      clusters.push_back(std::move(cj));
    }
    steps.push_back({{"actuator_id", s.actuator_id},
                     {"sensor_ids", s.sensor_ids},
                     {"som", som_file},
                     {"partition", to_json(s.partition)},
                     {"clusters", clusters},
                     {"train_experiments", s.train_experiments},
                     {"validation_novelty_rate", s.validation_novelty_rate}});
  }
  json val = json::array();
  for (const auto& v : bank.validation_spe) val.push_back(to_json(v));
  write_json_file(dir / "index.json", {{"scheme_version", kSchemeVersion},
                                       {"config", to_json(bank.config)},
                                       {"level", bank.level},
                                       {"train_experiments", bank.train_experiments},
                                       {"validation_experiments", bank.validation_experiments},
                                       {"steps", steps},
                                       {"validation_spe", val}});
}

BaselineBank load_bank(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path)) throw DataError("bank index not found: " + index_path.string());
  const json j = read_json_file(index_path);
  check_scheme(j, "bank index");
  try {
    BaselineBank bank;
    bank.config = pipeline_from_json(j.at("config"));
    bank.level = field<int>(j, "level");
    bank.train_experiments = field<std::vector<std::string>>(j, "train_experiments");
    bank.validation_experiments = field<std::vector<std::string>>(j, "validation_experiments");
    for (const auto& sj : j.at("steps")) {
      StepBank s;
      s.actuator_id = field<int>(sj, "actuator_id");
      s.sensor_ids = field<std::vector<int>>(sj, "sensor_ids");
      s.som = som_from_json(read_json_file(dir / field<std::string>(sj, "som")));
      s.partition = partition_from_json(sj.at("partition"));
      if (static_cast<Eigen::Index>(s.partition.unit_label.size()) != s.som.units())
        throw DataError("step " + std::to_string(s.actuator_id) + ": partition does not match the map");
      for (const auto& cj : sj.at("clusters")) {
        ClusterModel c;
        c.cluster = field<int>(cj, "cluster");
        c.n_train = field<int>(cj, "n_train");
        c.q95 = field<double>(cj, "q95");
        c.spe_threshold = field<double>(cj, "spe_threshold");
        if (!cj.at("pca").is_null()) c.pca = pca_from_json(read_json_file(dir / cj.at("pca").get<std::string>()));
        s.clusters.push_back(std::move(c));
      }
      if (static_cast<int>(s.clusters.size()) != s.partition.k)
        throw DataError("step " + std::to_string(s.actuator_id) + ": cluster count does not match the partition");
      s.train_experiments = field<std::vector<std::string>>(sj, "train_experiments");
      s.validation_novelty_rate = field<double>(sj, "validation_novelty_rate");
      bank.steps.push_back(std::move(s));
    }
    for (const auto& vj : j.at("validation_spe")) bank.validation_spe.push_back(spe_vector_from_json(vj));
    return bank;
  } catch (const json::exception& e) {
    throw DataError("bank index: " + std::string(e.what()));
  }
}

}  // namespace aubase
