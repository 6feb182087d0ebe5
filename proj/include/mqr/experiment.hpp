#pragma once

// Seeded experiment pipeline: load or generate a dataset, split, normalise,
// fit each method, calibrate, and evaluate coverage, area and cluster
// coverage deviation.

#include "mqr/calibration.hpp"
#include "mqr/data.hpp"
#include "mqr/metrics.hpp"
#include "mqr/naive_qr.hpp"
#include "mqr/npdqr.hpp"
#include "mqr/stdqr.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mqr {

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | csv
  Setting setting = Setting::Nonlinear;
  int d = 2;
  int p = 1;
  std::size_t n = 20000;
  std::uint64_t seed = 0;
  std::string path;
  std::vector<std::string> response_columns;
  int pca_components = 0;  // 0 keeps every feature
  std::string name;

  // Directory name under the output root.
  std::string label() const;
};

// Pre-calibration directional levels (NPDQR, ST-DQR) for a dataset.
std::pair<double, double> default_directional_levels(const DatasetSpec& spec);

struct ExperimentConfig {
  std::string name;
  DatasetSpec dataset;
  std::vector<std::string> methods = {"stdqr", "npdqr", "naive"};
  double alpha = 0.1;
  std::vector<std::uint64_t> seeds = {0};
  std::string out = "out";

  std::vector<int> hidden = {64, 64, 64};
  double leaky_slope = 0.2;
  double dropout = 0.0;
  bool batch_norm = false;
  TrainConfig training{};
  CvaeConfig cvae{};
  std::size_t pool_size = 2048;
  std::size_t per_step = 32;
  std::size_t membership = 256;
  std::optional<double> npdqr_level;
  std::optional<double> stdqr_level;
  LevelRule naive_rule = LevelRule::MainText;

  std::size_t area_samples = 0;  // 0 measures every test row
  int clusters = 3;
  double min_cluster_fraction = 0.2;
  int kmeans_restarts = 50;
  double fallback_gamma = 0.0;  // 0: longest region-grid cell diagonal
  bool save_models = true;

  // Throws SpecError on unknown keys or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
  // FNV-1a of the configuration without seeds, methods and output directory.
  std::string hash() const;

  double npdqr_directional_level() const;
  double stdqr_directional_level() const;
  NpdqrConfig npdqr_config(std::uint64_t seed) const;
  StdqrConfig stdqr_config(std::uint64_t seed) const;
  NaiveConfig naive_config(std::uint64_t seed) const;
};

Dataset load_dataset(const ExperimentConfig& config);

// Everything derived from (dataset, seed) before any method is fitted.
struct SeedContext {
  std::uint64_t seed = 0;
  SplitIndices split;
  NormalizedDataset normalized;
  Matrix x_train, y_train, x_cal, y_cal, x_val, y_val, x_test, y_test;
  Grid area_grid;
  Grid region_grid;
  ClusterAssignment clusters;
  bool clusters_constrained = true;
};

SeedContext prepare_seed(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed);

struct FittedMethod {
  std::string method;
  std::shared_ptr<NaiveModel> naive;
  std::shared_ptr<NpdqrModel> npdqr;
  std::shared_ptr<StdqrModel> stdqr;
  std::shared_ptr<RegionProvider> provider;
  std::optional<CalibratedRule> rule;
  double fit_seconds = 0.0;

  nlohmann::json calibration_json() const;
};

FittedMethod fit_method(const ExperimentConfig& config, const SeedContext& ctx, const std::string& method);
void calibrate_method(const ExperimentConfig& config, const SeedContext& ctx, FittedMethod& fitted);
ReportRow evaluate_method(const ExperimentConfig& config, const SeedContext& ctx, const FittedMethod& fitted);

std::string method_dir(const ExperimentConfig& config, const std::string& method, std::uint64_t seed);
void save_method(const std::string& dir, const FittedMethod& fitted);
// Loads the model files; the calibration is restored when present.
FittedMethod load_method(const std::string& dir, const ExperimentConfig& config, const SeedContext& ctx,
                         const std::string& method);

struct RunOptions {
  std::ostream* log = nullptr;
  // Reuse cells whose saved report.json succeeded under the same config hash.
  bool resume = false;
};

/// Runs every (seed, method) cell. A failing cell is recorded in its row and
/// the others continue. Writes per-cell reports and merged summaries when
/// save_models is set.
std::vector<ReportRow> run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Reads every report.json below the dataset directory and writes
// rows.csv, summary.csv and summary.json next to them.
std::vector<EvaluationReport> merge_reports(const ExperimentConfig& config);

}  // namespace mqr
