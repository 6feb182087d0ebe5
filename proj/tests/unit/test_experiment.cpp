#include "mqr/errors.hpp"
#include "mqr/experiment.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mqr;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny(const std::string& out) {
  return {{"dataset", {{"kind", "synthetic"}, {"setting", "nonlinear"}, {"d", 2}, {"p", 1}, {"n", 400}, {"seed", 1}}},
          {"seeds", {0}},
          {"out", out},
          {"network", {{"hidden", {8}}}},
          {"training", {{"max_epochs", 3}, {"patience", 3}}},
          {"cvae", {{"hidden", {8, 8}}}},
          {"cvae_training", {{"max_epochs", 3}, {"patience", 3}}},
          {"directions", {{"pool_size", 64}, {"membership", 32}}},
          {"evaluation", {{"area_samples", 5}, {"kmeans_restarts", 3}}}};
}

}  // namespace

TEST_CASE("configuration parsing") {
  const ExperimentConfig def = ExperimentConfig::from_json(nlohmann::json::object());
  CHECK(def.hidden == std::vector<int>{64, 64, 64});
  CHECK(def.training.batch_size == 256);
  CHECK(def.training.patience == 100);
  CHECK(def.cvae.train.batch_size == 512);
  CHECK(def.cvae.train.patience == 200);
  CHECK(def.cvae.latent_dim == 3);
  CHECK(def.cvae.kl_weight == 0.01);
  CHECK(def.pool_size == 2048);
  CHECK(def.per_step == 32);
  CHECK(def.membership == 256);
  CHECK(def.npdqr_directional_level() == 0.95);
  CHECK(def.stdqr_directional_level() == 0.93);

  CHECK_THROWS_AS(ExperimentConfig::from_json({{"bogus", 1}}), SpecError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"alpha", 1.5}}), SpecError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"seeds", nlohmann::json::array()}}), SpecError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"methods", {"vqr"}}}), SpecError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"dataset", {{"n", 0}}}}), SpecError);

  auto j = tiny("x");
  j["dataset"]["setting"] = "linear";
  CHECK(ExperimentConfig::from_json(j).stdqr_directional_level() == 0.95);
  j["dataset"]["setting"] = "nonlinear";
  j["dataset"]["d"] = 4;
  CHECK(ExperimentConfig::from_json(j).npdqr_directional_level() == 0.98);
  j["dataset"]["p"] = 10;
  CHECK(ExperimentConfig::from_json(j).stdqr_directional_level() == 0.95);

  const ExperimentConfig a = ExperimentConfig::from_json(tiny("a"));
  auto other = tiny("b");
  other["seeds"] = {4, 5};
  CHECK(ExperimentConfig::from_json(other).hash() == a.hash());
  other["alpha"] = 0.2;
  CHECK(ExperimentConfig::from_json(other).hash() != a.hash());
  CHECK(ExperimentConfig::from_json(a.to_json()).hash() == a.hash());
}

TEST_CASE("end-to-end run is reproducible") {
  const fs::path out = fs::temp_directory_path() / "mqr_experiment_test";
  fs::remove_all(out);
  ExperimentConfig config = ExperimentConfig::from_json(tiny(out.string()));
  const auto rows = run_experiment(config);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    INFO(r.method << ": " << r.error);
    CHECK(r.ok);
    CHECK(r.coverage > 0.5);
    CHECK(r.n_area == 5);
    CHECK(r.config_hash == config.hash());
    CHECK(r.cluster_coverage.size() == 3);
  }
  CHECK(fs::exists(out / "nonlinear_d2_p1" / "stdqr" / "0" / "bundle" / "manifest.json"));
  CHECK(fs::exists(out / "nonlinear_d2_p1" / "npdqr" / "0" / "npdqr.json"));
  CHECK(fs::exists(out / "nonlinear_d2_p1" / "naive" / "0" / "calibration.json"));
  CHECK(fs::exists(out / "nonlinear_d2_p1" / "summary.csv"));

  const auto again = run_experiment(config);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].coverage == rows[i].coverage);
    CHECK(again[i].area == rows[i].area);
    CHECK(again[i].gamma_cal == rows[i].gamma_cal);
    CHECK(again[i].delta_coverage == rows[i].delta_coverage);
  }

  // Reloaded models evaluate to the same report.
  const Dataset data = load_dataset(config);
  const SeedContext ctx = prepare_seed(config, data, 0);
  for (const auto& r : rows) {
    const FittedMethod f = load_method(method_dir(config, r.method, 0), config, ctx, r.method);
    const ReportRow e = evaluate_method(config, ctx, f);
    CHECK(e.coverage == r.coverage);
    CHECK(e.area == r.area);
  }

  config.methods = {"stdqr"};
  config.out = (out / "single").string();
  const auto single = run_experiment(config);
  CHECK(single.size() == 1);
  const auto reports = merge_reports(config);
  CHECK(reports.size() == 1);
  fs::remove_all(out);
}

TEST_CASE("a failing cell does not stop the others") {
  const fs::path out = fs::temp_directory_path() / "mqr_experiment_fail";
  fs::remove_all(out);
  auto j = tiny(out.string());
  j["dataset"]["n"] = 20;  // 5 calibration rows: too few for alpha = 0.1
  const auto rows = run_experiment(ExperimentConfig::from_json(j));
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
  }
  fs::remove_all(out);
}
