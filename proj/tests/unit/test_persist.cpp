#include "aubase/error.hpp"
#include "aubase/persist.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

using namespace aubase;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("aubase_persist_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("sha256 known digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("shortest round-trip doubles") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK_THROWS_AS(parse_double("1.5x"), DataError);
  CHECK_THROWS_AS(parse_double(""), DataError);
}

TEST_CASE("config round trips") {
  ScenarioConfig sc;
  sc.temperatures_c = {20, 40.5};
  sc.damage_severities = {1, 3};
  sc.noise_snr_db.reset();
  sc.seed = 99;
  const auto sc2 = scenario_from_json(to_json(sc));
  CHECK(to_json(sc2) == to_json(sc));
  CHECK_FALSE(sc2.noise_snr_db.has_value());
  CHECK(sc2.temperatures_c == sc.temperatures_c);

  PipelineConfig pc;
  pc.theta = 0.7;
  pc.grid_height = pc.grid_width = 5;
  pc.kernel = KernelForm::gaussian;
  pc.min_cluster_fraction = 0.1;
  pc.seed = 17;
  const auto pc2 = pipeline_from_json(to_json(pc));
  CHECK(to_json(pc2) == to_json(pc));
  CHECK(pc2.kernel == KernelForm::gaussian);

  // Omitted fields take their defaults.
  const auto partial = pipeline_from_json(nlohmann::json{{"epochs", 10}});
  CHECK(partial.epochs == 10);
  CHECK(partial.theta == PipelineConfig{}.theta);

  CHECK_THROWS_AS(pipeline_from_json(nlohmann::json{{"epoch", 10}}), DataError);
  CHECK_THROWS_AS(pipeline_from_json(nlohmann::json{{"epochs", "ten"}}), DataError);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json{{"carrier", 1}}), DataError);
  CHECK_THROWS_AS(pipeline_from_json(nlohmann::json::array()), DataError);
}

TEST_CASE("matrix json") {
  const Eigen::MatrixXd m = (Eigen::MatrixXd(2, 3) << 1, 2, 3, 4, 5, 0.1).finished();
  const auto j = to_json(m);
  CHECK(j.at("rows") == 2);
  CHECK(j.at("cols") == 3);
  CHECK(j.at("data").size() == 2);
  CHECK(j.at("data")[1][2] == 0.1);
  CHECK(matrix_from_json(j) == m);
  auto ragged = j;
  ragged["data"][1].erase(0);
  CHECK_THROWS_AS(matrix_from_json(ragged), DataError);
}

TEST_CASE("model round trips") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(20, 6);
  for (auto& v : x.reshaped()) v = g(rng);
  const std::vector<int> groups{0, 0, 0, 1, 1, 1};
  const auto pca = fit_pca(x, groups, 0.9);
  const auto pca2 = pca_from_json(to_json(pca));
  CHECK(pca2.loadings == pca.loadings);
  CHECK(pca2.eigvals == pca.eigvals);
  CHECK(pca2.retained == pca.retained);
  CHECK(pca2.scaling.group_stds == pca.scaling.group_stds);
  CHECK(spe(pca2, x) == spe(pca, x));

  auto som = train_som(init_som(3, 4, x, InitMode::linear, 1), x, {}).model;
  const auto som2 = som_from_json(to_json(som));
  CHECK(som2.weights == som.weights);
  CHECK(som2.height == 3);
  CHECK(som2.width == 4);
  CHECK(som2.kernel == som.kernel);

  const auto p = cluster(enrich(som, x));
  const auto p2 = partition_from_json(to_json(p));
  CHECK(p2.k == p.k);
  CHECK(p2.unit_label == p.unit_label);
  CHECK(p2.datum_label == p.datum_label);
  CHECK(p2.mode_units == p.mode_units);

  auto future = to_json(pca);
  future["scheme_version"] = kSchemeVersion + 1;
  CHECK_THROWS_AS(pca_from_json(future), DataError);
}

TEST_CASE("bank save and load") {
  ScenarioConfig sc;
  sc.temperatures_c = {35, 75};
  sc.n_repeats = 12;
  const auto d = generate_dataset(sc);
  PipelineConfig pc;
  pc.seed = 4;
  const auto bank = train_phase1(d.records, pc);

  const auto dir = scratch("bank");
  save_bank(bank, dir);
  CHECK(fs::exists(dir / "index.json"));
  const auto loaded = load_bank(dir);
  CHECK(loaded.level == bank.level);
  CHECK(loaded.train_experiments == bank.train_experiments);
  CHECK(loaded.validation_experiments == bank.validation_experiments);
  CHECK(to_json(loaded.config) == to_json(bank.config));
  REQUIRE(loaded.steps.size() == bank.steps.size());
  for (std::size_t s = 0; s < bank.steps.size(); ++s) {
    const auto& a = bank.steps[s];
    const auto& b = loaded.steps[s];
    CHECK(b.som.weights == a.som.weights);
    CHECK(b.partition.unit_label == a.partition.unit_label);
    REQUIRE(b.clusters.size() == a.clusters.size());
    for (std::size_t c = 0; c < a.clusters.size(); ++c) {
      CHECK(b.clusters[c].q95 == a.clusters[c].q95);
      CHECK(b.clusters[c].spe_threshold == a.clusters[c].spe_threshold);
      CHECK(b.clusters[c].pca.has_value() == a.clusters[c].pca.has_value());
    }
  }
  // Detection on the reloaded bank is identical.
  CHECK(to_json(detect(loaded, d.records)) == to_json(detect(bank, d.records)));

  // Saving twice gives identical bytes.
  const auto dir2 = scratch("bank2");
  save_bank(loaded, dir2);
  for (const auto& f : fs::recursive_directory_iterator(dir)) {
    if (!f.is_regular_file()) continue;
    CHECK(sha256_file(f.path()) == sha256_file(dir2 / fs::relative(f.path(), dir)));
  }

  CHECK_THROWS_AS(load_bank(scratch("missing")), DataError);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}
