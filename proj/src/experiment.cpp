#include "mqr/experiment.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

namespace fs = std::filesystem;

namespace mqr {

namespace {

void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SpecError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw SpecError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_training(const nlohmann::json& j, const std::string& where, TrainConfig& t) {
  check_keys(j, where, {"learning_rate", "batch_size", "max_epochs", "patience"});
  read(j, "learning_rate", t.learning_rate);
  read(j, "batch_size", t.batch_size);
  read(j, "max_epochs", t.max_epochs);
  read(j, "patience", t.patience);
}

nlohmann::json training_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience}};
}

std::uint64_t method_stream(const std::string& method) {
  if (method == "naive") return 1;
  if (method == "npdqr") return 2;
  if (method == "stdqr") return 3;
  throw SpecError("unknown method '" + method + "' (expected stdqr, npdqr or naive)");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace

std::string DatasetSpec::label() const {
  if (!name.empty()) return name;
  if (kind == "csv") return fs::path(path).stem().string();
  return std::string(to_string(setting)) + "_d" + std::to_string(d) + "_p" + std::to_string(p);
}

std::pair<double, double> default_directional_levels(const DatasetSpec& spec) {
  if (spec.kind == "csv") return {0.95, 0.93};
  if (spec.setting == Setting::Linear) return {0.95, 0.95};
  if (spec.d == 4) return {0.98, spec.p >= 10 ? 0.95 : 0.93};
  return {0.95, 0.93};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j, "config", {"name", "dataset", "methods", "alpha", "seeds", "out", "network", "training",
                           "cvae", "cvae_training", "directions", "stdqr", "npdqr", "naive",
                           "evaluation", "calibration", "save_models"});
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, "dataset", {"kind", "setting", "d", "p", "n", "seed", "path", "response_columns",
                              "pca_components", "name"});
    read(d, "kind", c.dataset.kind);
    if (d.contains("setting")) c.dataset.setting = setting_from_string(d.at("setting").get<std::string>());
    read(d, "d", c.dataset.d);
    read(d, "p", c.dataset.p);
    if (d.contains("n")) {
      const auto n = d.at("n").get<long long>();
      if (n < 1) throw SpecError("dataset.n must be >= 1");
      c.dataset.n = static_cast<std::size_t>(n);
    } else if (c.dataset.p >= 1) {
      c.dataset.n = default_synthetic_size(c.dataset.p);
    }
    read(d, "seed", c.dataset.seed);
    read(d, "path", c.dataset.path);
    read(d, "response_columns", c.dataset.response_columns);
    read(d, "pca_components", c.dataset.pca_components);
    read(d, "name", c.dataset.name);
    if (c.dataset.kind == "csv") c.cvae.train.learning_rate = 1e-4;
  }
  read(j, "methods", c.methods);
  read(j, "alpha", c.alpha);
  read(j, "seeds", c.seeds);
  read(j, "out", c.out);
  if (j.contains("network")) {
    const auto& n = j.at("network");
    check_keys(n, "network", {"hidden", "leaky_slope", "dropout", "batch_norm"});
    read(n, "hidden", c.hidden);
    read(n, "leaky_slope", c.leaky_slope);
    read(n, "dropout", c.dropout);
    read(n, "batch_norm", c.batch_norm);
    c.cvae.leaky_slope = c.leaky_slope;
  }
  if (j.contains("training")) read_training(j.at("training"), "training", c.training);
  if (j.contains("cvae")) {
    const auto& v = j.at("cvae");
    check_keys(v, "cvae", {"latent_dim", "kl_weight", "hidden", "dropout", "batch_norm"});
    read(v, "latent_dim", c.cvae.latent_dim);
    read(v, "kl_weight", c.cvae.kl_weight);
    read(v, "hidden", c.cvae.hidden);
    read(v, "dropout", c.cvae.dropout);
    read(v, "batch_norm", c.cvae.batch_norm);
  }
  if (j.contains("cvae_training")) read_training(j.at("cvae_training"), "cvae_training", c.cvae.train);
  if (j.contains("directions")) {
    const auto& d = j.at("directions");
    check_keys(d, "directions", {"pool_size", "per_step", "membership"});
    read(d, "pool_size", c.pool_size);
    read(d, "per_step", c.per_step);
    read(d, "membership", c.membership);
  }
  if (j.contains("npdqr")) {
    check_keys(j.at("npdqr"), "npdqr", {"directional_level"});
    if (j.at("npdqr").contains("directional_level") && !j.at("npdqr").at("directional_level").is_null())
      c.npdqr_level = j.at("npdqr").at("directional_level").get<double>();
  }
  if (j.contains("stdqr")) {
    const auto& s = j.at("stdqr");
    check_keys(s, "stdqr", {"directional_level", "latent_dim", "kl_weight"});
    if (s.contains("directional_level") && !s.at("directional_level").is_null())
      c.stdqr_level = s.at("directional_level").get<double>();
    read(s, "latent_dim", c.cvae.latent_dim);
    read(s, "kl_weight", c.cvae.kl_weight);
  }
  if (j.contains("naive")) {
    check_keys(j.at("naive"), "naive", {"level_rule"});
    if (j.at("naive").contains("level_rule"))
      c.naive_rule = level_rule_from_string(j.at("naive").at("level_rule").get<std::string>());
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation", {"area_samples", "clusters", "min_cluster_fraction", "kmeans_restarts"});
    read(e, "area_samples", c.area_samples);
    read(e, "clusters", c.clusters);
    read(e, "min_cluster_fraction", c.min_cluster_fraction);
    read(e, "kmeans_restarts", c.kmeans_restarts);
  }
  if (j.contains("calibration")) {
    check_keys(j.at("calibration"), "calibration", {"fallback_gamma"});
    read(j.at("calibration"), "fallback_gamma", c.fallback_gamma);
  }
  read(j, "save_models", c.save_models);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError("config " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json ds = {{"kind", dataset.kind}, {"name", dataset.name}};
  if (dataset.kind == "csv") {
    ds["path"] = dataset.path;
    ds["response_columns"] = dataset.response_columns;
    ds["pca_components"] = dataset.pca_components;
  } else {
    ds["setting"] = to_string(dataset.setting);
    ds["d"] = dataset.d;
    ds["p"] = dataset.p;
    ds["n"] = dataset.n;
    ds["seed"] = dataset.seed;
  }
  return {{"name", name},
          {"dataset", ds},
          {"methods", methods},
          {"alpha", alpha},
          {"seeds", seeds},
          {"out", out},
          {"network", {{"hidden", hidden}, {"leaky_slope", leaky_slope}, {"dropout", dropout}, {"batch_norm", batch_norm}}},
          {"training", training_json(training)},
          {"cvae", {{"latent_dim", cvae.latent_dim}, {"kl_weight", cvae.kl_weight}, {"hidden", cvae.hidden},
                    {"dropout", cvae.dropout}, {"batch_norm", cvae.batch_norm}}},
          {"cvae_training", training_json(cvae.train)},
          {"directions", {{"pool_size", pool_size}, {"per_step", per_step}, {"membership", membership}}},
          {"npdqr", {{"directional_level", npdqr_directional_level()}}},
          {"stdqr", {{"directional_level", stdqr_directional_level()}}},
          {"naive", {{"level_rule", to_string(naive_rule)}}},
          {"evaluation", {{"area_samples", area_samples}, {"clusters", clusters},
                          {"min_cluster_fraction", min_cluster_fraction}, {"kmeans_restarts", kmeans_restarts}}},
          {"calibration", {{"fallback_gamma", fallback_gamma}}},
          {"save_models", save_models}};
}

void ExperimentConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw SpecError("alpha must lie in (0, 1)");
  if (seeds.empty()) throw SpecError("seeds must be nonempty");
  if (methods.empty()) throw SpecError("methods must be nonempty");
  for (const auto& m : methods) method_stream(m);
  if (dataset.kind == "synthetic") {
    if (dataset.d < 2 || dataset.d > 4) throw SpecError("dataset.d must be 2, 3 or 4");
    if (dataset.p < 1) throw SpecError("dataset.p must be >= 1");
    if (dataset.n < 10) throw SpecError("dataset.n must be >= 10");
  } else if (dataset.kind == "csv") {
    if (dataset.path.empty()) throw SpecError("dataset.path is required for csv data");
    if (dataset.response_columns.empty()) throw SpecError("dataset.response_columns must be nonempty");
  } else {
    throw SpecError("dataset.kind must be synthetic or csv");
  }
  for (const auto* t : {&training, &cvae.train}) {
    if (!(t->learning_rate > 0.0) || t->batch_size < 1 || t->max_epochs < 1 || t->patience < 0)
      throw SpecError("training settings must be positive");
  }
  if (pool_size < 1 || per_step < 1 || membership < 1) throw SpecError("direction counts must be positive");
  for (auto level : {npdqr_level, stdqr_level})
    if (level && !(*level > 0.5 && *level < 1.0)) throw SpecError("directional levels must lie in (0.5, 1)");
  if (clusters < 1) throw SpecError("evaluation.clusters must be >= 1");
  if (fallback_gamma < 0.0) throw SpecError("calibration.fallback_gamma must be >= 0");
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("seeds");
  j.erase("out");
  j.erase("methods");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ExperimentConfig::npdqr_directional_level() const {
  return npdqr_level.value_or(default_directional_levels(dataset).first);
}

double ExperimentConfig::stdqr_directional_level() const {
  return stdqr_level.value_or(default_directional_levels(dataset).second);
}

NpdqrConfig ExperimentConfig::npdqr_config(std::uint64_t seed) const {
  NpdqrConfig c;
  c.hidden = hidden;
  c.leaky_slope = leaky_slope;
  c.dropout = dropout;
  c.batch_norm = batch_norm;
  c.train = training;
  c.pool_size = pool_size;
  c.per_step = per_step;
  c.membership = membership;
  c.seed = seed;
  return c;
}

StdqrConfig ExperimentConfig::stdqr_config(std::uint64_t seed) const {
  StdqrConfig c;
  c.cvae = cvae;
  c.cvae.seed = derive_seed(seed, 1);
  c.npdqr = npdqr_config(derive_seed(seed, 2));
  c.directional_level = stdqr_directional_level();
  return c;
}

NaiveConfig ExperimentConfig::naive_config(std::uint64_t seed) const {
  NaiveConfig c;
  c.hidden = hidden;
  c.leaky_slope = leaky_slope;
  c.dropout = dropout;
  c.batch_norm = batch_norm;
  c.train = training;
  c.rule = naive_rule;
  c.seed = seed;
  return c;
}

Dataset load_dataset(const ExperimentConfig& config) {
  const auto& spec = config.dataset;
  if (spec.kind == "synthetic") return gen_synthetic(spec.setting, spec.d, spec.p, spec.n, spec.seed);
  Dataset data = load_csv(spec.path, spec.response_columns);
  if (spec.pca_components > 0 && spec.pca_components < data.x.cols()) {
    data.x = pca_reduce(data.x, spec.pca_components);
    data.x_names.clear();
    for (int j = 0; j < spec.pca_components; ++j) data.x_names.push_back("pc" + std::to_string(j));
  }
  return data;
}

SeedContext prepare_seed(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.split = split(data.size(), derive_seed(seed, 0));
  ctx.normalized = zscore_fit_apply(data, ctx.split.train);
  const auto& nd = ctx.normalized.data;
  ctx.x_train = take_rows(nd.x, ctx.split.train);
  ctx.y_train = take_rows(nd.y, ctx.split.train);
  ctx.x_cal = take_rows(nd.x, ctx.split.calibration);
  ctx.y_cal = take_rows(nd.y, ctx.split.calibration);
  ctx.x_val = take_rows(nd.x, ctx.split.validation);
  ctx.y_val = take_rows(nd.y, ctx.split.validation);
  ctx.x_test = take_rows(nd.x, ctx.split.test);
  ctx.y_test = take_rows(nd.y, ctx.split.test);
  ctx.area_grid = build_grid(ctx.y_train, GridPurpose::AreaMeasurement);
  ctx.region_grid = build_grid(ctx.y_train, GridPurpose::RegionDiscretization);
  KmeansOptions ko;
  ko.restarts = config.kmeans_restarts;
  ko.min_fraction = config.min_cluster_fraction;
  const int k = std::min<int>(config.clusters, static_cast<int>(ctx.x_test.rows()));
  try {
    ctx.clusters = kmeans(ctx.x_test, k, derive_seed(seed, 9), ko);
  } catch (const ClusterConstraintError& e) {
    ctx.clusters = e.best();
    ctx.clusters_constrained = false;
  }
  return ctx;
}

nlohmann::json FittedMethod::calibration_json() const {
  if (naive) return {{"method", "naive"}, {"q", naive->q}, {"calibrated", naive->calibrated}};
  if (rule) return rule->to_json();
  return nlohmann::json::object();
}

namespace {

CalibrationOptions calibration_options(const ExperimentConfig& config, const SeedContext& ctx) {
  CalibrationOptions o;
  o.complement_grid = ctx.area_grid;
  o.anchor = ctx.area_grid.center();
  if (config.fallback_gamma > 0.0) {
    o.fallback_gamma = config.fallback_gamma;
  } else {
    double diag = 0.0;
    for (int j = 0; j < ctx.region_grid.dim(); ++j) diag += ctx.region_grid.step(j) * ctx.region_grid.step(j);
    o.fallback_gamma = std::sqrt(diag);
  }
  return o;
}

}  // namespace

FittedMethod fit_method(const ExperimentConfig& config, const SeedContext& ctx, const std::string& method) {
  const std::uint64_t stream = derive_seed(ctx.seed, method_stream(method), 17);
  const auto t0 = std::chrono::steady_clock::now();
  FittedMethod f;
  f.method = method;
  if (method == "naive") {
    f.naive = std::make_shared<NaiveModel>(
        fit_naive(ctx.x_train, ctx.y_train, config.alpha, config.naive_config(stream), ctx.x_val, ctx.y_val));
  } else if (method == "npdqr") {
    f.npdqr = std::make_shared<NpdqrModel>(fit_npdqr(ctx.x_train, ctx.y_train,
                                                     1.0 - config.npdqr_directional_level(),
                                                     config.npdqr_config(stream), ctx.x_val, ctx.y_val));
    f.provider = std::make_shared<NpdqrRegionProvider>(f.npdqr, ctx.region_grid);
  } else {
    f.stdqr = std::make_shared<StdqrModel>(
        fit_stdqr(ctx.x_train, ctx.y_train, ctx.x_val, ctx.y_val, config.stdqr_config(stream)));
    f.provider = std::make_shared<StdqrRegionProvider>(f.stdqr);
  }
  f.fit_seconds = seconds_since(t0);
  return f;
}

void calibrate_method(const ExperimentConfig& config, const SeedContext& ctx, FittedMethod& fitted) {
  if (fitted.naive) {
    calibrate_naive(*fitted.naive, ctx.x_cal, ctx.y_cal, config.alpha);
    return;
  }
  fitted.rule = calibrate(fitted.provider, ctx.x_cal, ctx.y_cal, config.alpha, calibration_options(config, ctx));
}

ReportRow evaluate_method(const ExperimentConfig& config, const SeedContext& ctx, const FittedMethod& fitted) {
  ReportRow row;
  row.dataset = config.dataset.label();
  row.method = fitted.method;
  row.seed = ctx.seed;
  row.config_hash = config.hash();
  const auto n = static_cast<std::size_t>(ctx.x_test.rows());
  const std::size_t n_area = config.area_samples == 0 ? n : std::min(n, config.area_samples);
  std::vector<bool> covered(n);
  double area_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector x = ctx.x_test.row(r).transpose();
    const Vector y = ctx.y_test.row(r).transpose();
    if (fitted.naive) {
      const Rectangle rect = fitted.naive->region(x);
      covered[i] = rect.contains(y);
      if (i < n_area) area_total += static_cast<double>(rectangle_area(rect, ctx.area_grid));
    } else {
      if (!fitted.rule) throw InvalidArgument("evaluate_method: method is not calibrated");
      const PreparedRegion region = fitted.rule->prepare(x);
      covered[i] = region.contains(y);
      if (i < n_area) area_total += static_cast<double>(region.area(ctx.area_grid));
    }
  }
  row.coverage = coverage(covered);
  row.n_test = n;
  row.n_area = n_area;
  row.area = n_area > 0 ? area_total / static_cast<double>(n_area) : 0.0;
  row.cluster_coverage = cluster_coverages(covered, ctx.clusters.labels, ctx.clusters.k());
  row.delta_coverage = delta_coverage(row.cluster_coverage, config.alpha);
  if (fitted.naive) {
    row.calibration_mode = "cqr";
    row.gamma_cal = fitted.naive->q;
  } else {
    row.calibration_mode = to_string(fitted.rule->mode);
    row.gamma_cal = fitted.rule->gamma_cal;
    row.c_init = fitted.rule->c_init;
  }
  return row;
}

std::string method_dir(const ExperimentConfig& config, const std::string& method, std::uint64_t seed) {
  return (fs::path(config.out) / config.dataset.label() / method / std::to_string(seed)).string();
}

void save_method(const std::string& dir, const FittedMethod& fitted) {
  fs::create_directories(dir);
  const fs::path root(dir);
  if (fitted.naive) fitted.naive->save((root / "naive.json").string());
  if (fitted.npdqr) fitted.npdqr->save((root / "npdqr.json").string());
  if (fitted.stdqr) fitted.stdqr->save_bundle((root / "bundle").string());
  if (fitted.naive ? fitted.naive->calibrated : fitted.rule.has_value())
    write_json(root / "calibration.json", fitted.calibration_json());
}

FittedMethod load_method(const std::string& dir, const ExperimentConfig& config, const SeedContext& ctx,
                         const std::string& method) {
  method_stream(method);
  (void)config;
  const fs::path root(dir);
  FittedMethod f;
  f.method = method;
  const bool has_cal = fs::exists(root / "calibration.json");
  if (method == "naive") {
    f.naive = std::make_shared<NaiveModel>(NaiveModel::load((root / "naive.json").string()));
    if (!has_cal) {
      f.naive->q = 0.0;
      f.naive->calibrated = false;
    }
    return f;
  }
  if (method == "npdqr") {
    f.npdqr = std::make_shared<NpdqrModel>(NpdqrModel::load((root / "npdqr.json").string()));
    f.provider = std::make_shared<NpdqrRegionProvider>(f.npdqr, ctx.region_grid);
  } else {
    f.stdqr = std::make_shared<StdqrModel>(StdqrModel::load_bundle((root / "bundle").string()));
    f.provider = std::make_shared<StdqrRegionProvider>(f.stdqr);
  }
  if (has_cal) f.rule = CalibratedRule::from_json(read_json(root / "calibration.json"), f.provider);
  return f;
}

std::vector<ReportRow> run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const Dataset data = load_dataset(config);
  std::vector<ReportRow> rows;
  for (const std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, data, seed);
    for (const auto& method : config.methods) {
      const fs::path saved = fs::path(method_dir(config, method, seed)) / "report.json";
      if (options.resume && fs::exists(saved)) {
        ReportRow cached = ReportRow::from_json(read_json(saved));
        if (cached.ok && cached.config_hash == config.hash()) {
          if (options.log) *options.log << "[seed " << seed << "] " << method << " reused " << saved.string() << std::endl;
          rows.push_back(std::move(cached));
          continue;
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      ReportRow row;
      try {
        FittedMethod fitted = fit_method(config, ctx, method);
        calibrate_method(config, ctx, fitted);
        row = evaluate_method(config, ctx, fitted);
        if (config.save_models) save_method(method_dir(config, method, seed), fitted);
      } catch (const std::exception& e) {
        row = ReportRow{};
        row.dataset = config.dataset.label();
        row.method = method;
        row.seed = seed;
        row.config_hash = config.hash();
        row.ok = false;
        row.error = e.what();
      }
      row.seconds = seconds_since(t0);
      if (config.save_models) {
        fs::create_directories(method_dir(config, method, seed));
        write_json(fs::path(method_dir(config, method, seed)) / "report.json", row.to_json());
      }
      if (options.log) {
        *options.log << "[seed " << seed << "] " << method;
        if (row.ok)
          *options.log << " coverage=" << row.coverage << " area=" << row.area
                       << " delta_coverage=" << row.delta_coverage << " mode=" << row.calibration_mode;
        else
          *options.log << " FAILED: " << row.error;
        *options.log << " (" << row.seconds << " s)" << std::endl;
      }
      rows.push_back(std::move(row));
    }
  }
  if (config.save_models) merge_reports(config);
  return rows;
}

std::vector<EvaluationReport> merge_reports(const ExperimentConfig& config) {
  const fs::path root = fs::path(config.out) / config.dataset.label();
  std::vector<fs::path> files;
  if (fs::exists(root))
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file() && entry.path().filename() == "report.json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ReportRow> rows;
  const std::string hash = config.hash();
  for (const auto& f : files) {
    ReportRow row = ReportRow::from_json(read_json(f));
    if (row.config_hash == hash) rows.push_back(std::move(row));
  }
  // Order by method (config order), then seed.
  auto rank = [&](const std::string& m) {
    const auto it = std::find(config.methods.begin(), config.methods.end(), m);
    return it - config.methods.begin();
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) {
    if (rank(a.method) != rank(b.method)) return rank(a.method) < rank(b.method);
    return a.seed < b.seed;
  });
  const auto reports = aggregate(rows);
  fs::create_directories(root);
  {
    std::ofstream out(root / "rows.csv");
    write_rows_csv(out, rows);
  }
  {
    std::ofstream out(root / "summary.csv");
    write_summary_csv(out, reports);
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  write_json(root / "summary.json", {{"config", config.to_json()}, {"config_hash", config.hash()}, {"reports", j}});
  return reports;
}

}  // namespace mqr
