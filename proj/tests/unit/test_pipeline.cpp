#include "aubase/pipeline.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace aubase;

namespace {

ScenarioConfig small_scenario() {
  ScenarioConfig sc;
  sc.temperatures_c = {35, 55, 75};
  sc.n_repeats = 40;
  sc.damage_severities = {2, 4};
  sc.seed = 3;
  return sc;
}

const Dataset& dataset() {
  static const Dataset d = generate_dataset(small_scenario());
  return d;
}

std::vector<SignalRecord> baselines(const std::vector<SignalRecord>& records) {
  std::vector<SignalRecord> out;
  for (const auto& r : records)
    if (r.state.is_baseline()) out.push_back(r);
  return out;
}

const BaselineBank& bank() {
  static const BaselineBank b = [] {
    PipelineConfig pc;
    pc.seed = 3;
    return train_phase1(baselines(dataset().records), pc);
  }();
  return b;
}

std::map<std::string, double> nominal_temperatures(const std::vector<SignalRecord>& records) {
  std::map<std::string, double> t;
  for (const auto& r : records) t[r.experiment_id] = r.nominal_temperature_c;
  return t;
}

}  // namespace

TEST_CASE("automatic grid sizes") {
  CHECK(pipeline_grid(210, 4.0) == std::pair<int, int>{7, 7});
  CHECK(pipeline_grid(330, 8.0) == std::pair<int, int>{6, 6});
  CHECK(pipeline_grid(100, 0.0) == default_grid(100));
  CHECK(pipeline_grid(5, 4.0) == std::pair<int, int>{2, 2});
  CHECK(pipeline_grid(100000, 4.0) == default_grid(100000));
}

TEST_CASE("config validation") {
  PipelineConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  bad([](PipelineConfig& c) { c.theta = 0.0; });
  bad([](PipelineConfig& c) { c.train_frac = 1.0; });
  bad([](PipelineConfig& c) { c.variance_threshold = 0.0; });
  bad([](PipelineConfig& c) { c.grid_height = 3; });
  bad([](PipelineConfig& c) { c.epochs = 0; });
  bad([](PipelineConfig& c) { c.min_cluster_fraction = 0.5; });
  bad([](PipelineConfig& c) { c.min_data_per_unit = -1.0; });
}

TEST_CASE("experiment split") {
  const auto base = baselines(dataset().records);
  const auto [train, val] = split_experiments(base, 0.7, 11);
  const auto [train2, val2] = split_experiments(base, 0.7, 11);
  CHECK(train == train2);
  CHECK(val == val2);

  std::set<std::string> all;
  for (const auto& r : base) all.insert(r.experiment_id);
  std::set<std::string> seen(train.begin(), train.end());
  for (const auto& id : val) CHECK(seen.insert(id).second);
  CHECK(seen == all);

  // Every temperature stratum contributes 70% of its 40 experiments.
  const auto temp = nominal_temperatures(base);
  std::map<double, int> per;
  for (const auto& id : train) ++per[temp.at(id)];
  for (const auto& [t, n] : per) CHECK(n == 28);

  const auto [other, other_val] = split_experiments(base, 0.7, 12);
  CHECK(other != train);
}

TEST_CASE("phase one clusters temperatures") {
  const auto& b = bank();
  CHECK(b.steps.size() == 4);
  CHECK(b.level >= 1);
  CHECK(b.level <= band_limited_max_level(1e6, 50e3));
  const auto temp = nominal_temperatures(dataset().records);
  for (const auto& step : b.steps) {
    CHECK(step.partition.k == 3);
    std::vector<int> truth;
    for (const auto& id : step.train_experiments) truth.push_back(static_cast<int>(temp.at(id)));
    std::vector<int> predicted(step.partition.datum_label.begin(), step.partition.datum_label.end());
    CHECK(label_agreement(predicted, truth) >= 0.9);
    for (const auto& c : step.clusters) {
      CHECK(c.pca.has_value() == (c.n_train >= 2));
      if (!c.pca) continue;
      CHECK(std::isfinite(c.q95));
      CHECK(c.q95 > 0.0);
      CHECK(std::isfinite(c.spe_threshold));
      CHECK(c.spe_threshold > 0.0);
    }
  }
}

TEST_CASE("single temperature gives one cluster") {
  ScenarioConfig sc = small_scenario();
  sc.temperatures_c = {45};
  sc.damage_severities = {};
  sc.n_repeats = 30;
  const auto d = generate_dataset(sc);
  PipelineConfig pc;
  const auto b = train_phase1(d.records, pc);
  for (const auto& step : b.steps) CHECK(step.partition.k == 1);
}

TEST_CASE("baseline selection") {
  const auto& b = bank();
  const auto base = baselines(dataset().records);
  const auto& step = b.step(1);
  const auto x = step_features(base, 1, b.level);
  std::map<std::string, Eigen::Index> row_of;
  for (Eigen::Index r = 0; r < x.n_rows(); ++r) row_of[x.rows[static_cast<std::size_t>(r)].experiment_id] = r;

  int own = 0;
  for (std::size_t i = 0; i < step.train_experiments.size(); ++i) {
    const auto sel = select_baseline(step, x.values.row(row_of.at(step.train_experiments[i])));
    if (sel.cluster == step.partition.datum_label[i]) ++own;
    CHECK(sel.model_cluster >= 0);
  }
  CHECK(own == static_cast<int>(step.train_experiments.size()));

  for (std::size_t c = 0; c < step.partition.mode_units.size(); ++c) {
    const auto sel = select_baseline(step, step.som.weights.row(step.partition.mode_units[c]));
    CHECK(sel.cluster == static_cast<int>(c));
    CHECK_FALSE(sel.novel);
    CHECK(sel.quantization_error == doctest::Approx(0.0));
  }

  const Eigen::RowVectorXd mean = x.values.colwise().mean();
  const double radius = (x.values.rowwise() - mean).rowwise().norm().maxCoeff();
  Eigen::RowVectorXd direction = x.values.row(0) - mean;
  direction.normalize();
  const Eigen::RowVectorXd far = mean + 10.0 * radius * direction;
  const auto out = select_baseline(step, far);
  CHECK(out.novel);
  if (out.cluster >= 0) CHECK(out.quantization_error > step.clusters[static_cast<std::size_t>(out.cluster)].q95);

  CHECK_THROWS_AS(select_baseline(step, Eigen::RowVectorXd::Zero(x.n_cols() + 1)), std::invalid_argument);
}

TEST_CASE("validation data does not touch the models") {
  const auto base = baselines(dataset().records);
  const auto& b = bank();
  const std::set<std::string> val(b.validation_experiments.begin(), b.validation_experiments.end());
  auto changed = base;
  for (auto& r : changed)
    if (val.count(r.experiment_id)) r.samples = r.samples.reverse().eval() * 3.0;
  std::reverse(changed.begin(), changed.end());
  PipelineConfig pc;
  pc.seed = 3;
  const auto b2 = train_phase1(changed, pc);
  CHECK(b2.level == b.level);
  CHECK(b2.train_experiments == b.train_experiments);
  for (std::size_t s = 0; s < b.steps.size(); ++s) {
    CHECK(b2.steps[s].som.weights == b.steps[s].som.weights);
    CHECK(b2.steps[s].partition.unit_label == b.steps[s].partition.unit_label);
    for (std::size_t c = 0; c < b.steps[s].clusters.size(); ++c) {
      CHECK(b2.steps[s].clusters[c].q95 == b.steps[s].clusters[c].q95);
      CHECK(b2.steps[s].clusters[c].spe_threshold == b.steps[s].clusters[c].spe_threshold);
    }
  }
}

TEST_CASE("detection report") {
  const auto& b = bank();
  auto records = dataset().records;
  // Drop one step of one damage experiment.
  std::string broken;
  for (const auto& r : records)
    if (!r.state.is_baseline()) {
      broken = r.experiment_id;
      break;
    }
  std::erase_if(records, [&](const SignalRecord& r) { return r.experiment_id == broken && r.actuator_id == 2; });

  const auto report = detect(b, records);
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.experiment_id);
  REQUIRE(report.experiments.size() == ids.size());
  CHECK(std::is_sorted(report.experiments.begin(), report.experiments.end(),
                       [](const auto& a, const auto& c) { return a.experiment_id < c.experiment_id; }));
  for (const auto& e : report.experiments) {
    CHECK(ids.count(e.experiment_id) == 1);
    if (e.experiment_id == broken) {
      CHECK(e.incomplete);
      CHECK(e.decision == "incomplete");
      CHECK(e.missing_steps == std::vector<int>{2});
      continue;
    }
    CHECK_FALSE(e.incomplete);
    CHECK(e.spe.spe.size() == b.steps.size());
    for (double v : e.spe.spe) CHECK(v >= 0.0);
    for (std::size_t s = 0; s < e.spe.novel.size(); ++s) {
      if (!e.spe.novel[s] || e.spe.selected_cluster[s] < 0) continue;
      // Novelty is re-checkable against the step's threshold.
      const auto& step = b.steps[s];
      const auto x = step_features(records, step.actuator_id, b.level);
      for (Eigen::Index r = 0; r < x.n_rows(); ++r)
        if (x.rows[static_cast<std::size_t>(r)].experiment_id == e.experiment_id) {
          const auto sel = select_baseline(step, x.values.row(r));
          CHECK(sel.quantization_error > step.clusters[static_cast<std::size_t>(sel.cluster)].q95);
        }
    }
    if (e.spe.any_novel()) CHECK(e.decision == "novel");
    else CHECK(e.decision == (e.spe.damage_score() > 1.0 ? "damage" : "baseline"));
  }
  CHECK(report.second_level_k >= 1);

  const auto again = detect(b, records);
  REQUIRE(again.experiments.size() == report.experiments.size());
  for (std::size_t i = 0; i < again.experiments.size(); ++i) {
    CHECK(again.experiments[i].spe.spe == report.experiments[i].spe.spe);
    CHECK(again.experiments[i].second_level_cluster == report.experiments[i].second_level_cluster);
  }
}

TEST_CASE("second level input") {
  SpeVector a;
  a.normalized_spe = {0.0, 1.0, std::exp(2.0) - 1.0};
  const std::vector<SpeVector> v{a};
  const auto m = second_level_input(v);
  REQUIRE(m.rows() == 1);
  CHECK(m(0, 0) == 0.0);
  CHECK(m(0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(m(0, 2) == doctest::Approx(2.0));

  SpeVector n;
  n.normalized_spe = {0.5};
  n.novel = {true};
  CHECK(std::isinf(n.damage_score()));
  n.novel = {false};
  CHECK(n.damage_score() == 0.5);
}
