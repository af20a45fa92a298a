#include "aubase/cli.hpp"

#include "aubase/error.hpp"
#include "aubase/persist.hpp"
#include "aubase/pipeline.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace aubase {

namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
  std::string scenario;
  std::string data;
  std::string bank;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  bool production = false;
  double tpr_target = 0.95;
};

void require_exists(const std::string& path, const char* flag) {
  if (path.empty()) throw std::invalid_argument(std::string(flag) + " is required");
  if (!fs::exists(path)) throw std::invalid_argument(std::string(flag) + " path does not exist: " + path);
}

// Digest of every regular file below `path` (or of the file itself), keyed by relative path.
json digest_tree(const fs::path& path) {
  if (fs::is_regular_file(path)) return {{path.filename().string(), sha256_file(path)}};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[fs::relative(f, path).generic_string()] = sha256_file(f);
  return out;
}

std::string tree_digest(const fs::path& path) { return sha256_hex(digest_tree(path).dump()); }

// Outputs go to a sibling staging directory that is renamed into place at the end.
class AtomicDir {
 public:
  explicit AtomicDir(const std::string& target) : target_(target) {
    if (target.empty()) throw std::invalid_argument("--out is required");
    if (fs::exists(target_) && !(fs::is_directory(target_) && fs::is_empty(target_)))
      throw std::invalid_argument("output directory exists and is not empty: " + target);
    const fs::path parent = fs::absolute(target_).parent_path();
    fs::create_directories(parent);
    staging_ = parent / ("." + fs::absolute(target_).filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~AtomicDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  const fs::path& path() const { return staging_; }
  void commit() {
    if (fs::exists(target_)) fs::remove(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void write_run_record(const fs::path& dir, const std::string& command, const json& config, const json& inputs) {
  write_json_file(dir / "run.json", {{"tool", "aubase"},
                                     {"version", kVersion},
                                     {"scheme_version", kSchemeVersion},
                                     {"command", command},
                                     {"config", config},
                                     {"inputs", inputs}});
}

PipelineConfig load_pipeline_config(const Options& o) {
  PipelineConfig c;
  if (!o.config.empty()) {
    require_exists(o.config, "--config");
    c = pipeline_from_json(read_json_file(o.config));
  }
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line + "\n";
}

void write_roc_csv(const fs::path& path, const RocCurve& curve) {
  std::string text = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points)
    text += csv_row({format_double(p.threshold), format_double(p.fpr), format_double(p.tpr)});
  write_text_file(path, text);
}

// Sequential ramp from white (low) to dark blue (high), linear in each RGB channel.
std::string ramp_colour(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const std::array<int, 3> lo{255, 255, 255}, hi{8, 48, 107};
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(lo[0] + t * (hi[0] - lo[0]))),
                static_cast<int>(std::lround(lo[1] + t * (hi[1] - lo[1]))),
                static_cast<int>(std::lround(lo[2] + t * (hi[2] - lo[2]))));
  return buf;
}

// Categorical palette for cluster maps; unassigned units are light grey.
std::string cluster_colour(int label) {
  static const std::array<const char*, 10> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return label < 0 ? "#eeeeee" : palette[static_cast<std::size_t>(label) % palette.size()];
}

template <typename ColourFn>
std::string grid_svg(int height, int width, ColourFn colour) {
  constexpr int cell = 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width * cell << "\" height=\"" << height * cell
    << "\">\n";
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      s << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << colour(r, c) << "\"/>\n";
  s << "</svg>\n";
  return s.str();
}

int cmd_generate(const Options& o, std::ostream& out) {
  ScenarioConfig sc;
  if (!o.scenario.empty()) {
    require_exists(o.scenario, "--scenario");
    sc = scenario_from_json(read_json_file(o.scenario));
  }
  if (o.seed) sc.seed = *o.seed;
  sc.validate();
  AtomicDir dir(o.out);
  const Dataset d = generate_dataset(sc);
  save_dataset(d, dir.path());
  write_run_record(dir.path(), "generate", to_json(sc), json::object());
  dir.commit();
  out << "generated " << d.records.size() << " records\n";
  return 0;
}

std::vector<SignalRecord> baselines_of(const std::vector<SignalRecord>& records) {
  std::vector<SignalRecord> out;
  for (const auto& r : records)
    if (r.state.is_baseline()) out.push_back(r);
  return out;
}

int cmd_train(const Options& o, std::ostream& out) {
  require_exists(o.data, "--data");
  const PipelineConfig config = load_pipeline_config(o);
  const auto records = load_dataset(o.data);
  const auto baselines = baselines_of(records);
  if (baselines.empty()) throw std::invalid_argument("dataset has no baseline records");
  AtomicDir dir(o.out);
  const BaselineBank bank = train_phase1(baselines, config);
  save_bank(bank, dir.path());
  write_run_record(dir.path(), "train", to_json(config), {{"data", tree_digest(o.data)}});
  dir.commit();
  out << "level " << bank.level;
  for (const auto& s : bank.steps) out << "; step " << s.actuator_id << ": " << s.partition.k << " clusters";
  out << "\n";
  return 0;
}

void write_report_csv(const fs::path& path, const BaselineBank& bank, const DetectionReport& report) {
  std::vector<std::string> header{"experiment_id", "state"};
  for (const auto& s : bank.steps) header.push_back("spe_step" + std::to_string(s.actuator_id));
  header.insert(header.end(), {"damage_score", "decision", "second_level_label"});
  std::string text = csv_row(header);
  for (const auto& e : report.experiments) {
    std::vector<std::string> row{e.experiment_id, e.state.label()};
    for (std::size_t s = 0; s < bank.steps.size(); ++s)
      row.push_back(e.incomplete ? "" : format_double(e.spe.spe[s]));
    row.push_back(e.incomplete ? "" : format_double(e.spe.damage_score()));
    row.push_back(e.decision);
    row.push_back(e.second_level_label);
    text += csv_row(row);
  }
  write_text_file(path, text);
}

int cmd_detect(const Options& o, std::ostream& out) {
  require_exists(o.bank, "--bank");
  require_exists(o.data, "--data");
  const BaselineBank bank = load_bank(o.bank);
  const auto records = load_dataset(o.data);
  AtomicDir dir(o.out);
  DetectOptions opts;
  opts.evaluation_mode = !o.production;
  const DetectionReport report = detect(bank, records, opts);
  write_json_file(dir.path() / "report.json", to_json(report));
  write_report_csv(dir.path() / "report.csv", bank, report);
  write_run_record(dir.path(), "detect", {{"evaluation_mode", opts.evaluation_mode}},
                   {{"bank", tree_digest(o.bank)}, {"data", tree_digest(o.data)}});
  dir.commit();
  out << report.experiments.size() << " experiments, second-level K = " << report.second_level_k << "\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  require_exists(o.bank, "--bank");
  require_exists(o.data, "--data");
  const BaselineBank bank = load_bank(o.bank);
  const auto records = load_dataset(o.data);
  const DetectionReport report = detect(bank, records, {true, false});

  std::vector<std::vector<double>> per_step(bank.steps.size());
  std::vector<double> combined;
  std::vector<bool> labels;
  for (const auto& e : report.experiments) {
    if (e.incomplete) continue;
    labels.push_back(!e.state.is_baseline());
    combined.push_back(e.spe.damage_score());
    for (std::size_t s = 0; s < bank.steps.size(); ++s)
      per_step[s].push_back(e.spe.novel[s] ? std::numeric_limits<double>::infinity() : e.spe.normalized_spe[s]);
  }
  if (std::count(labels.begin(), labels.end(), true) == 0 || std::count(labels.begin(), labels.end(), false) == 0)
    throw std::invalid_argument("evaluate needs both baseline and damage experiments");

  AtomicDir dir(o.out);
  json steps = json::array();
  for (std::size_t s = 0; s < bank.steps.size(); ++s) {
    const RocCurve c = roc(per_step[s], labels);
    write_roc_csv(dir.path() / ("roc_step" + std::to_string(bank.steps[s].actuator_id) + ".csv"), c);
    steps.push_back({{"actuator_id", bank.steps[s].actuator_id},
                     {"auc", c.auc},
                     {"fpr_calibrated", fpr_at(per_step[s], labels, 1.0)},
                     {"fpr_at_tpr", fpr_at_tpr(c, o.tpr_target)}});
  }
  const RocCurve all = roc(combined, labels);
  write_roc_csv(dir.path() / "roc_combined.csv", all);
  write_json_file(dir.path() / "summary.json", {{"tpr_target", o.tpr_target},
                                                 {"n_pos", all.n_pos},
                                                 {"n_neg", all.n_neg},
                                                 {"auc_combined", all.auc},
                                                 {"fpr_combined_calibrated", fpr_at(combined, labels, 1.0)},
                                                 {"steps", steps}});
  write_run_record(dir.path(), "evaluate", {{"tpr_target", o.tpr_target}},
                   {{"bank", tree_digest(o.bank)}, {"data", tree_digest(o.data)}});
  dir.commit();
  out << "combined AUC " << format_double(all.auc) << "\n";
  return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
  require_exists(o.data, "--data");
  const auto records = load_dataset(o.data);
  json inputs = {{"data", tree_digest(o.data)}};
  BaselineBank bank;
  json config;
  if (!o.bank.empty()) {
    require_exists(o.bank, "--bank");
    bank = load_bank(o.bank);
    inputs["bank"] = tree_digest(o.bank);
    config = to_json(bank.config);
  } else {
    const PipelineConfig pc = load_pipeline_config(o);
    bank = train_phase1(baselines_of(records), pc);
    config = to_json(pc);
  }
  AtomicDir dir(o.out);
  const ComparisonReport report = compare_monolithic(bank, records, o.tpr_target);
  write_json_file(dir.path() / "comparison.json", to_json(report));
  for (const auto& s : report.steps) {
    write_roc_csv(dir.path() / ("roc_proposed_step" + std::to_string(s.actuator_id) + ".csv"), s.roc_proposed);
    write_roc_csv(dir.path() / ("roc_monolithic_step" + std::to_string(s.actuator_id) + ".csv"), s.roc_monolithic);
  }
  config["tpr_target"] = o.tpr_target;
  write_run_record(dir.path(), "compare", config, inputs);
  dir.commit();
  for (const auto& s : report.steps)
    out << "step " << s.actuator_id << ": r " << s.proposed_r << " vs " << s.monolithic_r << ", AUC "
        << format_double(s.auc_proposed) << " vs " << format_double(s.auc_monolithic) << ", FPR "
        << format_double(s.fpr_proposed) << " vs " << format_double(s.fpr_monolithic) << "\n";
  return 0;
}

int cmd_export(const Options& o, std::ostream& out, bool clusters) {
  require_exists(o.bank, "--bank");
  const BaselineBank bank = load_bank(o.bank);
  AtomicDir dir(o.out);
  for (const auto& s : bank.steps) {
    const std::string stem = (clusters ? "clusters_step" : "umatrix_step") + std::to_string(s.actuator_id);
    std::string csv;
    std::string svg;
    if (clusters) {
      for (int r = 0; r < s.som.height; ++r) {
        std::vector<std::string> row;
        for (int c = 0; c < s.som.width; ++c)
          row.push_back(std::to_string(s.partition.unit_label[static_cast<std::size_t>(r * s.som.width + c)]));
        csv += csv_row(row);
      }
      svg = grid_svg(s.som.height, s.som.width, [&](int r, int c) {
        return cluster_colour(s.partition.unit_label[static_cast<std::size_t>(r * s.som.width + c)]);
      });
    } else {
      const Eigen::MatrixXd u = u_matrix(s.som);
      const double lo = u.minCoeff(), hi = u.maxCoeff();
      for (Eigen::Index r = 0; r < u.rows(); ++r) {
        std::vector<std::string> row;
        for (Eigen::Index c = 0; c < u.cols(); ++c) row.push_back(format_double(u(r, c)));
        csv += csv_row(row);
      }
      svg = grid_svg(s.som.height, s.som.width,
                     [&](int r, int c) { return ramp_colour(hi > lo ? (u(r, c) - lo) / (hi - lo) : 0.0); });
    }
    write_text_file(dir.path() / (stem + ".csv"), csv);
    write_text_file(dir.path() / (stem + ".svg"), svg);
  }
  write_run_record(dir.path(), clusters ? "export-clusters" : "export-umatrix", json::object(),
                   {{"bank", tree_digest(o.bank)}});
  dir.commit();
  out << "exported " << bank.steps.size() << " steps\n";
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Baseline selection and damage detection for guided-wave monitoring", "aubase"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { o.seed = v; },
                                            "Root seed (overrides the config)");
  };
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("--scenario", o.scenario, "Scenario JSON");
  gen->add_option("--out", o.out, "Output dataset directory")->required();
  add_seed(gen);

  auto* train = app.add_subcommand("train", "Train the baseline bank");
  train->add_option("--data", o.data, "Dataset directory or manifest")->required();
  train->add_option("--config", o.config, "Pipeline config JSON");
  train->add_option("--out", o.out, "Output bank directory")->required();
  add_seed(train);

  auto* det = app.add_subcommand("detect", "Select baselines and classify new data");
  det->add_option("--bank", o.bank, "Bank directory")->required();
  det->add_option("--data", o.data, "Dataset directory or manifest")->required();
  det->add_option("--out", o.out, "Output report directory")->required();
  det->add_flag("--production", o.production, "Emit opaque second-level cluster ids");

  auto* eval = app.add_subcommand("evaluate", "ROC and FPR of the bank on labelled data");
  eval->add_option("--bank", o.bank, "Bank directory")->required();
  eval->add_option("--data", o.data, "Dataset directory or manifest")->required();
  eval->add_option("--out", o.out, "Output directory")->required();
  eval->add_option("--tpr", o.tpr_target, "Sensitivity for the matched FPR")->check(CLI::Range(0.0, 1.0));

  auto* cmp = app.add_subcommand("compare", "Proposed bank against one all-condition PCA per step");
  cmp->add_option("--data", o.data, "Dataset directory or manifest")->required();
  cmp->add_option("--bank", o.bank, "Bank directory (trained from --data when absent)");
  cmp->add_option("--config", o.config, "Pipeline config JSON");
  cmp->add_option("--out", o.out, "Output directory")->required();
  cmp->add_option("--tpr", o.tpr_target, "Sensitivity for the matched FPR")->check(CLI::Range(0.0, 1.0));
  add_seed(cmp);

  auto* um = app.add_subcommand("export-umatrix", "U-matrix of every step as CSV and SVG");
  um->add_option("--bank", o.bank, "Bank directory")->required();
  um->add_option("--out", o.out, "Output directory")->required();

  auto* cl = app.add_subcommand("export-clusters", "Unit cluster labels of every step as CSV and SVG");
  cl->add_option("--bank", o.bank, "Bank directory")->required();
  cl->add_option("--out", o.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n" << app.help();
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (det->parsed()) return cmd_detect(o, out);
    if (eval->parsed()) return cmd_evaluate(o, out);
    if (cmp->parsed()) return cmd_compare(o, out);
    if (um->parsed()) return cmd_export(o, out, false);
    if (cl->parsed()) return cmd_export(o, out, true);
    err << "error: no subcommand\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << one_line(e.what()) << "\n";
    return 2;
  }
}

}  // namespace aubase
