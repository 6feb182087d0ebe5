// mqr: experiment driver for multivariate quantile regions.

#include "mqr/errors.hpp"
#include "mqr/experiment.hpp"
#include "mqr/numerics.hpp"
#include "mqr/svg.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mqr;

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string methods;
};

void add_common(CLI::App* cmd, Common& c, bool require_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment configuration (JSON)");
  if (require_config) opt->required();
  cmd->add_option("--seed", c.seeds, "Seed(s) overriding the configuration");
  cmd->add_option("--out", c.out, "Output root overriding the configuration");
  cmd->add_option("--methods", c.methods, "Comma separated subset of stdqr,npdqr,naive");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig config = ExperimentConfig::load(c.config);
  if (!c.seeds.empty()) config.seeds = c.seeds;
  if (!c.out.empty()) config.out = c.out;
  if (!c.methods.empty()) config.methods = split_list(c.methods);
  config.validate();
  return config;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw SpecError("not a number: '" + s + "'");
  return v;
}

// "a,b,c" lists or "start:stop:step" inclusive ranges; stop < start is empty.
std::vector<double> parse_range(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') == std::string::npos) {
    for (const auto& item : split_list(s)) out.push_back(parse_double(item));
    return out;
  }
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 2 || parts.size() > 3) throw SpecError("range must be start:stop[:step]: '" + s + "'");
  const double start = parse_double(parts[0]), stop = parse_double(parts[1]);
  const double step = parts.size() == 3 ? parse_double(parts[2]) : 1.0;
  if (!(step > 0.0)) throw SpecError("range step must be positive: '" + s + "'");
  const double n = std::floor((stop - start) / step + 1e-9);
  for (long long i = 0; i <= static_cast<long long>(n); ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void print_summary(const std::vector<EvaluationReport>& reports) {
  std::cout << std::left << std::setw(22) << "dataset" << std::setw(8) << "method" << std::setw(7) << "seeds"
            << std::setw(22) << "coverage % (se)" << std::setw(24) << "area (se)" << std::setw(24) << "delta_coverage % (se)" << "failed\n";
  for (const auto& r : reports) {
    std::ostringstream cov, area, dc;
    cov << std::fixed << std::setprecision(3) << 100 * r.coverage.mean << " (" << 100 * r.coverage.se << ")";
    area << std::fixed << std::setprecision(1) << r.area.mean << " (" << r.area.se << ")";
    dc << std::fixed << std::setprecision(3) << 100 * r.delta_coverage.mean << " (" << 100 * r.delta_coverage.se
       << ")";
    std::cout << std::setw(22) << r.dataset << std::setw(8) << r.method << std::setw(7) << r.coverage.count
              << std::setw(22) << cov.str() << std::setw(24) << area.str() << std::setw(24) << dc.str() << r.failures
              << "\n";
  }
}

// gen-data ------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string setting = "nonlinear";
  int d = 2;
  int p = 1;
  long long n = -1;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_gen_data(const GenArgs& a) {
  DatasetSpec spec;
  if (!a.config.empty()) {
    spec = ExperimentConfig::load(a.config).dataset;
    if (spec.kind != "synthetic") throw SpecError("gen-data needs a synthetic dataset spec");
  } else {
    spec.setting = setting_from_string(a.setting);
    spec.d = a.d;
    spec.p = a.p;
    spec.seed = a.seed;
    if (a.n >= 0) {
      if (a.n == 0) throw SpecError("n must be >= 1");
      spec.n = static_cast<std::size_t>(a.n);
    } else {
      spec.n = default_synthetic_size(spec.p);
    }
  }
  if (spec.d < 2 || spec.d > 4) throw SpecError("d must be 2, 3 or 4");
  if (spec.p < 1) throw SpecError("p must be >= 1");
  const fs::path csv = a.output.empty() ? fs::path("data") / (spec.label() + ".csv") : fs::path(a.output);
  const Dataset data = gen_synthetic(spec.setting, spec.d, spec.p, spec.n, spec.seed);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  save_csv(csv.string(), data);
  const nlohmann::json manifest = {{"kind", "synthetic"},
                                   {"setting", to_string(spec.setting)},
                                   {"d", spec.d},
                                   {"p", spec.p},
                                   {"n", spec.n},
                                   {"seed", spec.seed},
                                   {"csv", csv.filename().string()},
                                   {"x_columns", data.x_names},
                                   {"y_columns", data.y_names}};
  fs::path manifest_path = csv;
  manifest_path.replace_extension(".manifest.json");
  write_text(manifest_path, manifest.dump(2) + "\n");
  std::cout << "wrote " << csv.string() << " (" << spec.n << " rows) and " << manifest_path.string() << "\n";
  return 0;
}

// run -----------------------------------------------------------------------

int cmd_run(const Common& c, bool quiet, bool resume) {
  const ExperimentConfig config = load_config(c);
  RunOptions options;
  options.resume = resume;
  if (!quiet) options.log = &std::cerr;
  const auto rows = run_experiment(config, options);
  print_summary(aggregate(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  if (failed > 0) {
    std::cerr << "mqr: " << failed << " of " << rows.size() << " cells failed\n";
    return 3;
  }
  return 0;
}

// theory --------------------------------------------------------------------

struct TheoryArgs {
  std::string alphas = "0.1";
  std::string rs = "1:4";
  std::size_t monte_carlo = 0;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_theory(const TheoryArgs& a) {
  const auto alphas = parse_range(a.alphas);
  const auto rs = parse_range(a.rs);
  std::ostringstream csv;
  csv << "alpha,r,coverage";
  if (a.monte_carlo > 0) csv << ",monte_carlo";
  csv << "\n";
  for (const double alpha : alphas)
    for (const double rv : rs) {
      const int r = static_cast<int>(std::lround(rv));
      csv << format_number(alpha) << ',' << r << ',' << format_number(dqr_theoretical_coverage(alpha, r));
      if (a.monte_carlo > 0)
        csv << ',' << format_number(dqr_coverage_monte_carlo(alpha, r, a.monte_carlo, derive_seed(a.seed, r)));
      csv << "\n";
    }
  if (a.output.empty())
    std::cout << csv.str();
  else
    write_text(a.output, csv.str());
  return 0;
}

// plot ----------------------------------------------------------------------

struct PlotArgs {
  std::vector<double> xs;
  std::vector<std::string> summaries;
  std::string output;
  std::size_t samples = 2000;
};

PointMatrix region_points_at(const FittedMethod& fitted, const SeedContext& ctx, const Vector& x) {
  const PointMatrix grid = ctx.area_grid.points();
  std::vector<Eigen::Index> keep;
  if (fitted.naive) {
    const Rectangle rect = fitted.naive->region(x);
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
      if (rect.contains(grid.row(i).transpose())) keep.push_back(i);
  } else if (fitted.rule) {
    const PreparedRegion region = fitted.rule->prepare(x);
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
      if (region.contains(grid.row(i).data())) keep.push_back(i);
  } else {
    return fitted.provider->region(x).points;
  }
  PointMatrix out(static_cast<Eigen::Index>(keep.size()), grid.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = grid.row(keep[k]);
  return out;
}

int plot_regions(const Common& c, const PlotArgs& a) {
  const ExperimentConfig config = load_config(c);
  if (a.xs.empty()) throw SpecError("plot needs --x values or --summary files");
  if (config.dataset.d != 2 && config.dataset.kind == "synthetic")
    throw UnsupportedPlot("region scatter plots need 2-d responses; use --summary for area bars");
  const Dataset data = load_dataset(config);
  if (data.y.cols() != 2) throw UnsupportedPlot("region scatter plots need 2-d responses");
  for (const std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, data, seed);
    const auto& xs = ctx.normalized.x_stats;
    const auto& ys = ctx.normalized.y_stats;
    for (const auto& method : config.methods) {
      const std::string dir = method_dir(config, method, seed);
      const FittedMethod fitted = load_method(dir, config, ctx, method);
      for (const double xv : a.xs) {
        Vector x_raw = Vector::Constant(data.x.cols(), xv);
        PointMatrix samples;
        if (config.dataset.kind == "synthetic") {
          const Vector beta = synthetic_beta(config.dataset.p, config.dataset.seed);
          samples = sample_conditional(config.dataset.setting, 2, beta, x_raw, a.samples, derive_seed(seed, 11));
        } else {
          // Responses of the rows closest to x stand in for conditional samples.
          std::vector<std::pair<double, Eigen::Index>> near;
          for (Eigen::Index i = 0; i < data.x.rows(); ++i)
            near.emplace_back((data.x.row(i).transpose() - x_raw).squaredNorm(), i);
          const std::size_t m = std::min<std::size_t>(a.samples, near.size());
          std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(m), near.end());
          samples.resize(static_cast<Eigen::Index>(m), 2);
          for (std::size_t k = 0; k < m; ++k) samples.row(static_cast<Eigen::Index>(k)) = data.y.row(near[k].second);
        }
        const Vector x = xs.apply(x_raw.transpose()).row(0).transpose();
        const PointMatrix region = region_points_at(fitted, ctx, x);
        const PointMatrix region_raw = region.rows() > 0 ? PointMatrix(ys.invert(region)) : PointMatrix(0, 2);
        const std::string title = method + " at x=" + format_number(xv) + " (seed " + std::to_string(seed) + ")";
        const fs::path file = (a.output.empty() ? fs::path(dir) : fs::path(a.output)) /
                              (method + "_seed" + std::to_string(seed) + "_x" + format_number(xv) + ".svg");
        write_text(file, region_scatter_svg(samples, region_raw, title));
        std::cout << "wrote " << file.string() << " (" << region_raw.rows() << " region points)\n";
      }
    }
  }
  return 0;
}

int plot_area_bars(const PlotArgs& a) {
  std::vector<BarValue> values;
  for (const auto& path : a.summaries) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    const auto j = nlohmann::json::parse(in);
    const auto& ds = j.at("config").at("dataset");
    const std::string group =
        ds.value("kind", "synthetic") == "synthetic" ? "d=" + std::to_string(ds.at("d").get<int>())
                                                     : ds.value("name", path);
    for (const auto& r : j.at("reports"))
      values.push_back({group, r.at("method").get<std::string>(), r.at("area").at("mean").get<double>(),
                        r.at("area").at("se").get<double>()});
  }
  const std::string file = a.output.empty() ? "area_vs_d.svg" : a.output;
  write_text(file, grouped_bars_svg(values, "Quantile region area by response dimension", "grid cells"));
  std::cout << "wrote " << file << "\n";
  return 0;
}

// calibrate / evaluate ------------------------------------------------------

int cmd_calibrate(const Common& c) {
  const ExperimentConfig config = load_config(c);
  const Dataset data = load_dataset(config);
  for (const std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, data, seed);
    for (const auto& method : config.methods) {
      const std::string dir = method_dir(config, method, seed);
      FittedMethod fitted = load_method(dir, config, ctx, method);
      calibrate_method(config, ctx, fitted);
      save_method(dir, fitted);
      std::cout << "[seed " << seed << "] " << method << ": " << fitted.calibration_json().dump() << "\n";
    }
  }
  return 0;
}

int cmd_evaluate(const Common& c, bool merge_only) {
  const ExperimentConfig config = load_config(c);
  if (!merge_only) {
    const Dataset data = load_dataset(config);
    for (const std::uint64_t seed : config.seeds) {
      const SeedContext ctx = prepare_seed(config, data, seed);
      for (const auto& method : config.methods) {
        const std::string dir = method_dir(config, method, seed);
        const FittedMethod fitted = load_method(dir, config, ctx, method);
        ReportRow row = evaluate_method(config, ctx, fitted);
        write_text(fs::path(dir) / "report.json", row.to_json().dump(2) + "\n");
        std::cout << "[seed " << seed << "] " << method << " coverage=" << row.coverage << " area=" << row.area
                  << "\n";
      }
    }
  }
  print_summary(merge_reports(config));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate quantile regions: data generation, training, calibration and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV plus manifest");
  gen_cmd->add_option("--config", gen.config, "Take the dataset spec from this configuration");
  gen_cmd->add_option("--setting", gen.setting, "linear or nonlinear");
  gen_cmd->add_option("--d", gen.d, "Response dimension (2-4)");
  gen_cmd->add_option("--p", gen.p, "Feature dimension");
  gen_cmd->add_option("--n", gen.n, "Rows (default depends on p)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.output, "CSV path");

  Common run_c;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Fit, calibrate and evaluate every (seed, method) cell");
  add_common(run_cmd, run_c);
  run_cmd->add_flag("--quiet", quiet, "No per-cell progress on stderr");
  bool resume = false;
  run_cmd->add_flag("--resume", resume, "Skip cells that already have a successful report");

  TheoryArgs theory;
  auto* theory_cmd = app.add_subcommand("theory", "Coverage of directional quantile regions for normal latents");
  theory_cmd->add_option("--alpha", theory.alphas, "Alpha list a,b,c or range start:stop:step");
  theory_cmd->add_option("--r", theory.rs, "Latent dimension list or range");
  theory_cmd->add_option("--monte-carlo", theory.monte_carlo, "Add a Monte-Carlo column with this many draws");
  theory_cmd->add_option("--seed", theory.seed, "Monte-Carlo seed");
  theory_cmd->add_option("--output", theory.output, "CSV path (default stdout)");

  Common plot_c;
  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Region scatter plots from saved models, or area bar charts");
  add_common(plot_cmd, plot_c, false);
  plot_cmd->add_option("--x", plot.xs, "Input value(s); every feature is set to the value");
  plot_cmd->add_option("--summary", plot.summaries, "summary.json files for an area-vs-dimension chart");
  plot_cmd->add_option("--samples", plot.samples, "Conditional samples per plot");
  plot_cmd->add_option("--output", plot.output, "Output directory (scatter) or SVG path (bars)");

  Common cal_c;
  auto* cal_cmd = app.add_subcommand("calibrate", "Recalibrate saved models on the calibration split");
  add_common(cal_cmd, cal_c);

  Common eval_c;
  bool merge_only = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate saved calibrated models and merge reports");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_flag("--merge-only", merge_only, "Only merge existing report.json files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*run_cmd) return cmd_run(run_c, quiet, resume);
    if (*theory_cmd) return cmd_theory(theory);
    if (*plot_cmd) {
      if (!plot.summaries.empty()) return plot_area_bars(plot);
      if (plot_c.config.empty()) throw SpecError("plot needs --config with --x, or --summary files");
      return plot_regions(plot_c, plot);
    }
    if (*cal_cmd) return cmd_calibrate(cal_c);
    if (*eval_cmd) return cmd_evaluate(eval_c, merge_only);
  } catch (const SpecError& e) {
    std::cerr << "mqr: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedPlot& e) {
    std::cerr << "mqr: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "mqr: parse error at row " << e.row() << ", column " << e.column() << ": " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "mqr: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
