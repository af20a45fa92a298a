#include "aubase/pipeline.hpp"

#include "aubase/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

namespace aubase {

namespace {

constexpr int kLevelCeiling = 8;
constexpr std::uint64_t kSplitStream = 0x51;
constexpr std::uint64_t kSomStream = 0x50;
constexpr std::uint64_t kSecondStream = 0x52;

double positive_floor(double v) { return std::max(v, std::numeric_limits<double>::min()); }

std::uint64_t seed_for(std::uint64_t root, std::initializer_list<std::uint64_t> stream) {
  auto rng = derive_rng(root, stream);
  return rng();
}

struct TrainedMap {
  SomModel som;
  EnrichedSom enriched;
  ClusterPartition partition;
};

TrainedMap fit_map(const Eigen::MatrixXd& data, int height, int width, double min_data_per_unit,
                   const PipelineConfig& config, std::uint64_t seed) {
  if (height <= 0 || width <= 0) std::tie(height, width) = pipeline_grid(data.rows(), min_data_per_unit);
  SomModel som = init_som(height, width, data, InitMode::linear, seed);
  som.kernel = config.kernel;
  TrainOptions opts;
  opts.epochs = config.epochs;
  opts.schedule = {config.lambda_start, config.lambda_end};
  som = train_som(std::move(som), data, opts).model;
  EnrichedSom e = enrich(som, data, config.bandwidth > 0.0 ? std::optional<double>(config.bandwidth) : std::nullopt);
  ClusterOptions copts;
  copts.theta = config.theta;
  copts.min_cluster_fraction = config.min_cluster_fraction;
  ClusterPartition p = cluster(e, copts);
  return {std::move(som), std::move(e), std::move(p)};
}

std::vector<Eigen::Index> rows_in(const FeatureMatrix& x, const std::set<std::string>& ids) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index r = 0; r < x.n_rows(); ++r)
    if (ids.count(x.rows[static_cast<std::size_t>(r)].experiment_id)) out.push_back(r);
  return out;
}

// Per-step fused features restricted to experiments holding every expected channel.
struct StepRows {
  FeatureMatrix x;
  std::map<std::string, Eigen::Index> row_of;
};

StepRows complete_rows(std::span<const SignalRecord> records, const StepBank& step, int level,
                       std::set<std::string>& incomplete) {
  StepLayout found = layout_for_step(records, step.actuator_id);
  StepLayout layout;
  layout.actuator_id = step.actuator_id;
  layout.sensor_ids = step.sensor_ids;
  for (auto& e : found.experiments) {
    bool complete = true;
    for (int s : step.sensor_ids) complete = complete && e.channels.count(s);
    if (complete)
      layout.experiments.push_back(std::move(e));
    else
      incomplete.insert(e.meta.experiment_id);
  }
  StepRows out;
  if (layout.experiments.empty()) {
    out.x.group_ids = step.sensor_ids;
    return out;
  }
  std::map<std::string, const SignalRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  const auto bank = db8<double>();
  std::map<std::string, Eigen::VectorXd> features;
  for (const auto& e : layout.experiments)
    for (const auto& [sensor, id] : e.channels)
      if (std::count(step.sensor_ids.begin(), step.sensor_ids.end(), sensor))
        features[id] = extract_features(*by_id.at(id), level, bank);
  out.x = unfold(features, layout);
  for (Eigen::Index r = 0; r < out.x.n_rows(); ++r) out.row_of[out.x.rows[static_cast<std::size_t>(r)].experiment_id] = r;
  return out;
}

SpeVector score_experiment(const BaselineBank& bank, const std::vector<StepRows>& per_step, const RowMeta& meta) {
  SpeVector v;
  v.experiment_id = meta.experiment_id;
  v.state = meta.state;
  v.nominal_temperature_c = meta.nominal_temperature_c;
  for (std::size_t s = 0; s < bank.steps.size(); ++s) {
    const auto& step = bank.steps[s];
    const Eigen::RowVectorXd row = per_step[s].x.values.row(per_step[s].row_of.at(meta.experiment_id));
    const Selection sel = select_baseline(step, row);
    const double e = selection_spe(step, sel, row);
    v.spe.push_back(e);
    v.normalized_spe.push_back(e / step.clusters[static_cast<std::size_t>(sel.model_cluster)].spe_threshold);
    v.selected_cluster.push_back(sel.cluster);
    v.novel.push_back(sel.novel);
  }
  return v;
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("pipeline config: " + what); };
  if (grid_height < 0 || grid_width < 0) fail("grid dimensions must be >= 0");
  if ((grid_height == 0) != (grid_width == 0)) fail("grid_height and grid_width must both be 0 or both positive");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lambda_end > 0.0)) fail("lambda_end must be positive");
  if (!(theta > 0.0)) fail("theta must be positive");
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) fail("variance_threshold must lie in (0, 1]");
  if (!(train_frac > 0.0 && train_frac < 1.0)) fail("train_frac must lie in (0, 1)");
  if (!(novelty_percentile > 0.0 && novelty_percentile <= 1.0)) fail("novelty_percentile must lie in (0, 1]");
  if (!(spe_percentile > 0.0 && spe_percentile <= 1.0)) fail("spe_percentile must lie in (0, 1]");
  if (max_level < 0) fail("max_level must be >= 0");
  if (!(carrier_hz > 0.0)) fail("carrier_hz must be positive");
  if (second_grid < 0) fail("second_grid must be >= 0");
  if (!(min_data_per_unit >= 0.0)) fail("min_data_per_unit must be >= 0");
  if (!(second_min_data_per_unit >= 0.0)) fail("second_min_data_per_unit must be >= 0");
  if (!(min_cluster_fraction >= 0.0 && min_cluster_fraction < 0.5)) fail("min_cluster_fraction must be in [0, 0.5)");
}

std::pair<int, int> pipeline_grid(Eigen::Index n, double min_data_per_unit) {
  auto [h, w] = default_grid(n);
  if (min_data_per_unit > 0.0) {
    const int cap = std::max(2, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n) / min_data_per_unit))));
    h = std::min(h, cap);
    w = std::min(w, cap);
  }
  return {h, w};
}

bool SpeVector::any_novel() const { return std::find(novel.begin(), novel.end(), true) != novel.end(); }

double SpeVector::damage_score() const {
  if (any_novel()) return std::numeric_limits<double>::infinity();
  double best = 0.0;
  for (double v : normalized_spe) best = std::max(best, v);
  return best;
}

const StepBank& BaselineBank::step(int actuator_id) const {
  for (const auto& s : steps)
    if (s.actuator_id == actuator_id) return s;
  throw std::invalid_argument("bank has no actuation step " + std::to_string(actuator_id));
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_experiments(
    std::span<const SignalRecord> records, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("split: train_frac must lie in (0, 1)");
  std::map<std::pair<std::string, double>, std::set<std::string>> strata;
  for (const auto& r : records) strata[{r.state.label(), r.nominal_temperature_c}].insert(r.experiment_id);

  std::vector<std::string> train, validation;
  std::uint64_t index = 0;
  for (const auto& [key, ids] : strata) {
    std::vector<std::string> order(ids.begin(), ids.end());
    auto rng = derive_rng(seed, {kSplitStream, index++});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<long>(order.size());
    const long n_train = std::clamp(std::lround(train_frac * static_cast<double>(n)), 1L, n);
    train.insert(train.end(), order.begin(), order.begin() + n_train);
    validation.insert(validation.end(), order.begin() + n_train, order.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
  return {train, validation};
}

int choose_level(std::span<const SignalRecord> records, const PipelineConfig& config) {
  if (records.empty()) throw std::invalid_argument("choose_level: no records");
  int ceiling = config.max_level;
  if (ceiling == 0)
    ceiling = std::min(kLevelCeiling, band_limited_max_level(records.front().sample_rate_hz, config.carrier_hz));
  const auto bank = db8<double>();
  std::map<int, int> votes;
  for (const auto& r : records) {
    const Eigen::VectorXd x = pad_to_level(r.samples, ceiling);
    if (x.squaredNorm() == 0.0) continue;
    votes[select_level(x, bank, ceiling)] += 1;
  }
  if (votes.empty()) return ceiling;
  int best = votes.begin()->first;
  for (const auto& [level, count] : votes)
    if (count >= votes[best]) best = level;
  return best;
}

FeatureMatrix step_features(std::span<const SignalRecord> records, int actuator_id, int level) {
  const StepLayout layout = layout_for_step(records, actuator_id);
  const auto bank = db8<double>();
  std::map<std::string, Eigen::VectorXd> features;
  for (const auto& r : records)
    if (r.actuator_id == actuator_id) features[r.id] = extract_features(r, level, bank);
  return unfold(features, layout);
}

BaselineBank train_phase1(std::span<const SignalRecord> baseline_records, const PipelineConfig& config) {
  config.validate();
  if (baseline_records.empty()) throw std::invalid_argument("train: no baseline records");
  for (const auto& r : baseline_records)
    if (!r.state.is_baseline()) throw std::invalid_argument("train: record " + r.id + " is not a baseline");

  BaselineBank bank;
  bank.config = config;
  std::tie(bank.train_experiments, bank.validation_experiments) =
      split_experiments(baseline_records, config.train_frac, config.seed);
  const std::set<std::string> train_ids(bank.train_experiments.begin(), bank.train_experiments.end());
  const std::set<std::string> val_ids(bank.validation_experiments.begin(), bank.validation_experiments.end());

  std::vector<SignalRecord> train_records;
  for (const auto& r : baseline_records)
    if (train_ids.count(r.experiment_id)) train_records.push_back(r);
  bank.level = choose_level(train_records, config);

  std::set<int> actuators;
  for (const auto& r : baseline_records) actuators.insert(r.actuator_id);

  std::vector<StepRows> per_step;
  for (int a : actuators) {
    const FeatureMatrix all = step_features(baseline_records, a, bank.level);
    const auto tr_rows = rows_in(all, train_ids);
    if (tr_rows.size() < 2)
      throw std::invalid_argument("train: step " + std::to_string(a) + " has fewer than 2 training experiments");
    const FeatureMatrix xtr = all.select_rows(tr_rows);

    StepBank step;
    step.actuator_id = a;
    step.sensor_ids = all.group_ids;
    for (const auto& m : xtr.rows) step.train_experiments.push_back(m.experiment_id);
    TrainedMap map = fit_map(xtr.values, config.grid_height, config.grid_width, config.min_data_per_unit, config,
                             seed_for(config.seed, {kSomStream, static_cast<std::uint64_t>(a)}));
    step.som = std::move(map.som);
    step.partition = std::move(map.partition);

    const Eigen::VectorXd qe = quantization_errors(step.som, xtr.values);
    for (int c = 0; c < step.partition.k; ++c) {
      std::vector<Eigen::Index> members;
      std::vector<double> member_qe;
      for (Eigen::Index r = 0; r < xtr.n_rows(); ++r) {
        if (step.partition.datum_label[static_cast<std::size_t>(r)] != c) continue;
        members.push_back(r);
        member_qe.push_back(qe[r]);
      }
      ClusterModel cm;
      cm.cluster = c;
      cm.n_train = static_cast<int>(members.size());
      cm.q95 = positive_floor(percentile(member_qe, config.novelty_percentile));
      if (members.size() >= 2) {
        const FeatureMatrix xc = xtr.select_rows(members);
        try {
          cm.pca = fit_pca(xc, config.variance_threshold);
        } catch (const std::invalid_argument&) {
          cm.pca.reset();  // degenerate cluster: no model
        }
      }
      if (cm.pca) {
        const Eigen::VectorXd e = spe(*cm.pca, xtr.select_rows(members).values);
        // Relative floor: tiny clusters can be reproduced exactly by their own components.
        const double floor = 1e-9 * cm.pca->eigvals.sum();
        cm.spe_threshold = positive_floor(
            std::max(percentile(std::vector<double>(e.begin(), e.end()), config.spe_percentile), floor));
      } else {
        cm.spe_threshold = positive_floor(0.0);
      }
      step.clusters.push_back(std::move(cm));
    }
    if (std::none_of(step.clusters.begin(), step.clusters.end(), [](const ClusterModel& c) { return c.pca.has_value(); }))
      throw std::invalid_argument("train: step " + std::to_string(a) + " has no cluster with a usable PCA model");

    const auto val_rows = rows_in(all, val_ids);
    int novel = 0;
    for (auto r : val_rows) novel += select_baseline(step, all.values.row(r)).novel ? 1 : 0;
    step.validation_novelty_rate = val_rows.empty() ? 0.0 : static_cast<double>(novel) / static_cast<double>(val_rows.size());

    StepRows rows;
    rows.x = all;
    for (Eigen::Index r = 0; r < all.n_rows(); ++r) rows.row_of[all.rows[static_cast<std::size_t>(r)].experiment_id] = r;
    per_step.push_back(std::move(rows));
    bank.steps.push_back(std::move(step));
  }

  for (const auto& id : bank.validation_experiments) {
    bool everywhere = true;
    for (const auto& s : per_step) everywhere = everywhere && s.row_of.count(id);
    if (!everywhere) continue;
    const auto& meta = per_step.front().x.rows[static_cast<std::size_t>(per_step.front().row_of.at(id))];
    bank.validation_spe.push_back(score_experiment(bank, per_step, meta));
  }
  return bank;
}

Selection select_baseline(const StepBank& step, const Eigen::RowVectorXd& feature_row) {
  if (feature_row.size() != step.som.dim())
    throw std::invalid_argument("select_baseline: feature width " + std::to_string(feature_row.size()) +
                                " does not match step " + std::to_string(step.actuator_id) + " width " +
                                std::to_string(step.som.dim()));
  Selection sel;
  sel.bmu = bmu(step.som, feature_row);
  sel.quantization_error = (step.som.weights.row(sel.bmu) - feature_row).norm();
  sel.cluster = step.partition.unit_label[static_cast<std::size_t>(sel.bmu)];
  sel.novel = sel.cluster < 0 ||
              sel.quantization_error > step.clusters[static_cast<std::size_t>(sel.cluster)].q95;

  if (sel.cluster >= 0 && step.clusters[static_cast<std::size_t>(sel.cluster)].pca) {
    sel.model_cluster = sel.cluster;
  } else {
    // Nearest unit (in weight space) belonging to a cluster that owns a model.
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index u = 0; u < step.som.units(); ++u) {
      const int c = step.partition.unit_label[static_cast<std::size_t>(u)];
      if (c < 0 || !step.clusters[static_cast<std::size_t>(c)].pca) continue;
      const double d = (step.som.weights.row(u) - feature_row).squaredNorm();
      if (d < best) {
        best = d;
        sel.model_cluster = c;
      }
    }
  }
  if (sel.model_cluster < 0) throw std::invalid_argument("select_baseline: step has no PCA model");
  return sel;
}

double selection_spe(const StepBank& step, const Selection& sel, const Eigen::RowVectorXd& feature_row) {
  return spe(*step.clusters.at(static_cast<std::size_t>(sel.model_cluster)).pca, feature_row);
}

Eigen::MatrixXd second_level_input(std::span<const SpeVector> vectors) {
  if (vectors.empty()) return {};
  const auto width = static_cast<Eigen::Index>(vectors.front().normalized_spe.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(vectors.size()), width);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<Eigen::Index>(vectors[i].normalized_spe.size()) != width)
      throw std::invalid_argument("second level: SPE vectors differ in length");
    for (Eigen::Index s = 0; s < width; ++s) x(static_cast<Eigen::Index>(i), s) = std::log1p(vectors[i].normalized_spe[static_cast<std::size_t>(s)]);
  }
  return x;
}

DetectionReport detect(const BaselineBank& bank, std::span<const SignalRecord> records, const DetectOptions& options) {
  if (bank.steps.empty()) throw std::invalid_argument("detect: bank has no steps");
  std::map<std::string, RowMeta> experiments;
  for (const auto& r : records) {
    auto& m = experiments[r.experiment_id];
    m.experiment_id = r.experiment_id;
    m.state = r.state;
    m.temperature_c = r.temperature_c;
    m.nominal_temperature_c = r.nominal_temperature_c;
  }

  std::vector<StepRows> per_step;
  std::map<std::string, std::vector<int>> missing;
  for (const auto& step : bank.steps) {
    std::set<std::string> incomplete;
    per_step.push_back(complete_rows(records, step, bank.level, incomplete));
    for (const auto& [id, meta] : experiments)
      if (!per_step.back().row_of.count(id)) missing[id].push_back(step.actuator_id);
  }

  DetectionReport report;
  std::vector<SpeVector> vectors;
  std::vector<std::size_t> vector_owner;
  for (const auto& [id, meta] : experiments) {
    ExperimentResult res;
    res.experiment_id = id;
    res.state = meta.state;
    res.nominal_temperature_c = meta.nominal_temperature_c;
    if (auto it = missing.find(id); it != missing.end()) {
      res.incomplete = true;
      res.missing_steps = it->second;
      res.decision = "incomplete";
    } else {
      res.spe = score_experiment(bank, per_step, meta);
      if (res.spe.any_novel())
        res.decision = "novel";
      else
        res.decision = res.spe.damage_score() > 1.0 ? "damage" : "baseline";
      vectors.push_back(res.spe);
      vector_owner.push_back(report.experiments.size());
    }
    report.experiments.push_back(std::move(res));
  }

  const std::size_t n_detect = vectors.size();
  vectors.insert(vectors.end(), bank.validation_spe.begin(), bank.validation_spe.end());
  if (!options.second_level || vectors.size() < 2) return report;

  const Eigen::MatrixXd x = second_level_input(vectors);
  PipelineConfig second = bank.config;
  const TrainedMap map = fit_map(x, second.second_grid, second.second_grid, second.second_min_data_per_unit, second,
                                 seed_for(bank.config.seed, {kSecondStream}));
  report.second_level_k = map.partition.k;
  for (std::size_t i = 0; i < n_detect; ++i)
    report.experiments[vector_owner[i]].second_level_cluster = map.partition.datum_label[i];
  report.validation_labels.assign(map.partition.datum_label.begin() + static_cast<long>(n_detect),
                                  map.partition.datum_label.end());

  for (int c = 0; c < map.partition.k; ++c) {
    if (!options.evaluation_mode) {
      report.cluster_names[c] = "c" + std::to_string(c);
      continue;
    }
    std::map<std::string, int> votes;
    for (std::size_t i = 0; i < vectors.size(); ++i)
      if (map.partition.datum_label[i] == c) votes[vectors[i].state.label()] += 1;
    std::string best;
    int best_count = 0;
    for (const auto& [label, count] : votes)
      if (count > best_count) best = label, best_count = count;
    report.cluster_names[c] = best.empty() ? "c" + std::to_string(c) : best;
  }
  for (auto& res : report.experiments)
    if (res.second_level_cluster >= 0) res.second_level_label = report.cluster_names.at(res.second_level_cluster);
  return report;
}

ComparisonReport compare_monolithic(std::span<const SignalRecord> records, const PipelineConfig& config,
                                    double tpr_target) {
  std::vector<SignalRecord> baselines;
  for (const auto& r : records)
    if (r.state.is_baseline()) baselines.push_back(r);
  const BaselineBank bank = train_phase1(baselines, config);
  return compare_monolithic(bank, records, tpr_target);
}

ComparisonReport compare_monolithic(const BaselineBank& bank, std::span<const SignalRecord> records,
                                    double tpr_target) {
  const std::set<std::string> train_ids(bank.train_experiments.begin(), bank.train_experiments.end());
  ComparisonReport report;
  report.tpr_target = tpr_target;

  std::map<std::string, double> combined_prop, combined_mono;
  std::map<std::string, bool> positive;
  std::map<std::string, int> seen_steps;
  for (const auto& step : bank.steps) {
    std::set<std::string> incomplete;
    const StepRows rows = complete_rows(records, step, bank.level, incomplete);
    std::vector<Eigen::Index> tr, test;
    for (Eigen::Index r = 0; r < rows.x.n_rows(); ++r) {
      const auto& meta = rows.x.rows[static_cast<std::size_t>(r)];
      if (meta.state.is_baseline() && train_ids.count(meta.experiment_id))
        tr.push_back(r);
      else
        test.push_back(r);
    }
    if (tr.size() < 2) throw std::invalid_argument("compare: step " + std::to_string(step.actuator_id) + " lacks training baselines");
    const PcaModel mono = fit_pca(rows.x.select_rows(tr), bank.config.variance_threshold);
    const Eigen::VectorXd tr_spe = spe(mono, rows.x.select_rows(tr).values);
    const double mono_thr = positive_floor(percentile(std::vector<double>(tr_spe.begin(), tr_spe.end()), bank.config.spe_percentile));

    StepComparison sc;
    sc.actuator_id = step.actuator_id;
    sc.monolithic_r = mono.retained;
    for (const auto& c : step.clusters)
      if (c.pca) {
        sc.cluster_r.push_back(c.pca->retained);
        sc.proposed_r = std::max(sc.proposed_r, c.pca->retained);
      }

    std::vector<double> s_prop, s_mono;
    std::vector<bool> labels;
    for (auto r : test) {
      const auto& meta = rows.x.rows[static_cast<std::size_t>(r)];
      const Eigen::RowVectorXd row = rows.x.values.row(r);
      const Selection sel = select_baseline(step, row);
      const double prop = sel.novel ? std::numeric_limits<double>::infinity()
                                    : selection_spe(step, sel, row) /
                                          step.clusters[static_cast<std::size_t>(sel.model_cluster)].spe_threshold;
      const double m = spe(mono, row);
      s_prop.push_back(prop);
      s_mono.push_back(m);
      labels.push_back(!meta.state.is_baseline());
      auto& cp = combined_prop[meta.experiment_id];
      auto& cm = combined_mono[meta.experiment_id];
      cp = std::max(cp, prop);
      cm = std::max(cm, m / mono_thr);
      positive[meta.experiment_id] = !meta.state.is_baseline();
      seen_steps[meta.experiment_id] += 1;
    }
    sc.roc_proposed = roc(s_prop, labels);
    sc.roc_monolithic = roc(s_mono, labels);
    sc.auc_proposed = sc.roc_proposed.auc;
    sc.auc_monolithic = sc.roc_monolithic.auc;
    sc.fpr_proposed = fpr_at_tpr(sc.roc_proposed, tpr_target);
    sc.fpr_monolithic = fpr_at_tpr(sc.roc_monolithic, tpr_target);
    sc.fpr_proposed_calibrated = fpr_at(s_prop, labels, 1.0);
    sc.fpr_monolithic_calibrated = fpr_at(s_mono, labels, mono_thr);
    report.n_pos = sc.roc_proposed.n_pos;
    report.n_neg = sc.roc_proposed.n_neg;
    sc.scores_proposed = std::move(s_prop);
    sc.scores_monolithic = std::move(s_mono);
    sc.labels = std::move(labels);
    report.steps.push_back(std::move(sc));
  }

  std::vector<double> cp, cm;
  std::vector<bool> cl;
  for (const auto& [id, n] : seen_steps) {
    if (n != static_cast<int>(bank.steps.size())) continue;
    cp.push_back(combined_prop[id]);
    cm.push_back(combined_mono[id]);
    cl.push_back(positive[id]);
  }
  report.auc_proposed_combined = roc(cp, cl).auc;
  report.auc_monolithic_combined = roc(cm, cl).auc;
  return report;
}

}  // namespace aubase
