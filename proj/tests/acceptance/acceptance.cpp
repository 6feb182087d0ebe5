// Acceptance checks: one PASS/FAIL line per criterion.
//
// Usage: mqr_acceptance [--only 1,2,...] [--out DIR]
// The desk-scale experiment runs (criteria 3, 4 and 10) are written below
// DIR and reused when their reports already exist.

#include "mqr/calibration.hpp"
#include "mqr/cvae.hpp"
#include "mqr/experiment.hpp"
#include "mqr/naive_qr.hpp"
#include "mqr/nn.hpp"
#include "mqr/numerics.hpp"
#include "mqr/regions.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

using namespace mqr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

fs::path g_out = MQR_ACCEPTANCE_OUT;

// 1 -------------------------------------------------------------------------

Outcome analytic_coverage() {
  const double c = dqr_theoretical_coverage(0.0062, 3);
  bool ok = c >= 0.895 && c <= 0.905;
  double worst = 0.0;
  for (int r = 1; r <= 4; ++r)
    for (double a : {0.05, 0.1}) {
      const double mc = dqr_coverage_monte_carlo(a, r, 1000000, derive_seed(2024, r, a < 0.075 ? 1 : 2));
      worst = std::max(worst, std::abs(mc - dqr_theoretical_coverage(a, r)));
    }
  ok = ok && worst <= 0.005;
  return {ok, "coverage(0.0062, 3) = " + fmt(c, 6) + ", max |MC - analytic| = " + fmt(worst, 3)};
}

// 2 -------------------------------------------------------------------------

Outcome conformal_guarantee() {
  // Radius 1 balls undercover (grow), radius 2.6 balls overcover (shrink).
  std::string detail;
  bool ok = true;
  for (double radius : {1.0, 2.6}) {
    const auto sim = oracle::conformal_simulation(1000, 99, 20, 0.1, radius, derive_seed(7, radius > 2 ? 2 : 1));
    const double m = sim.mean(), se = sim.standard_error();
    const bool pass = m >= 0.9 - 3 * se && m <= 0.91 + 3 * se;
    ok = ok && pass;
    detail += (detail.empty() ? "" : "; ") + std::string(sim.shrink_trials > 500 ? "shrink" : "grow") +
              " mean coverage " + fmt(m, 5) + " (se " + fmt(se, 2) + ")";
  }
  return {ok, detail};
}

// Desk-scale runs ------------------------------------------------------------

ExperimentConfig desk_config(int d) {
  const fs::path file = fs::path(MQR_ACCEPTANCE_CONFIG_DIR) / ("nonlinear_d" + std::to_string(d) + ".json");
  ExperimentConfig c = ExperimentConfig::load(file.string());
  c.out = (g_out / "runs").string();
  return c;
}

std::map<std::string, std::vector<ReportRow>> g_rows;

const std::vector<ReportRow>& desk_rows(int d) {
  const std::string key = "d" + std::to_string(d);
  auto it = g_rows.find(key);
  if (it != g_rows.end()) return it->second;
  RunOptions o;
  o.log = &std::cerr;
  o.resume = true;
  return g_rows[key] = run_experiment(desk_config(d), o);
}

std::map<std::string, EvaluationReport> by_method(const std::vector<ReportRow>& rows) {
  std::map<std::string, EvaluationReport> out;
  for (const auto& r : aggregate(rows)) out[r.method] = r;
  return out;
}

std::string failures(const std::vector<ReportRow>& rows) {
  std::string s;
  for (const auto& r : rows)
    if (!r.ok) s += " [" + r.method + " seed " + std::to_string(r.seed) + ": " + r.error + "]";
  return s;
}

// 3 -------------------------------------------------------------------------

Outcome desk_coverage() {
  const auto& rows = desk_rows(2);
  auto reports = by_method(rows);
  bool ok = failures(rows).empty();
  std::string detail;
  for (const char* m : {"stdqr", "npdqr", "naive"}) {
    const auto& r = reports[m];
    ok = ok && r.coverage.count > 0 && std::abs(r.coverage.mean - 0.9) <= 0.01;
    detail += std::string(detail.empty() ? "" : ", ") + m + " " + fmt(100 * r.coverage.mean, 5) + "% (se " +
              fmt(100 * r.coverage.se, 2) + ", " + std::to_string(r.coverage.count) + " seeds)";
  }
  return {ok, detail + failures(rows)};
}

// 4 -------------------------------------------------------------------------

Outcome area_ordering() {
  bool ok = true;
  std::string detail;
  for (const auto& [d, factor] : std::vector<std::pair<int, double>>{{2, 1.5}, {3, 5.0}}) {
    const auto& rows = desk_rows(d);
    auto r = by_method(rows);
    const double st = r["stdqr"].area.mean, np = r["npdqr"].area.mean, nv = r["naive"].area.mean;
    const bool pass = failures(rows).empty() && r["stdqr"].area.count > 0 && st > 0 && st * factor <= np &&
                      st * factor <= nv;
    ok = ok && pass;
    detail += std::string(detail.empty() ? "" : "; ") + "d=" + std::to_string(d) + " areas stdqr " + fmt(st) +
              ", npdqr " + fmt(np) + " (x" + fmt(np / st, 3) + "), naive " + fmt(nv) + " (x" + fmt(nv / st, 3) +
              "), need x" + fmt(factor, 2);
  }
  return {ok, detail};
}

// 5 -------------------------------------------------------------------------

Outcome naive_bound() {
  bool ok = true;
  std::string detail;
  for (int d = 2; d <= 4; ++d) {
    // Oracle per-dimension quantiles of Uniform(0, 1) at the naive levels.
    const auto [lo, hi] = naive_levels(0.1, d);
    Rectangle rect;
    rect.lower = Vector::Constant(d, lo);
    rect.upper = Vector::Constant(d, hi);
    Rng rng(derive_seed(5, d));
    std::size_t in = 0;
    const int n = 100000;
    Vector y(d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) y[j] = rng.uniform();
      in += rect.contains(y);
    }
    const double c = static_cast<double>(in) / n, target = std::pow(1.0 - 0.1 / d, d);
    ok = ok && c >= 0.9 && std::abs(c - target) <= 0.005;
    detail += std::string(detail.empty() ? "" : ", ") + "d=" + std::to_string(d) + " " + fmt(c, 5) + " vs " +
              fmt(target, 5);
  }
  return {ok, detail};
}

// 6 -------------------------------------------------------------------------

Outcome gradient_integrity() {
  Rng rng(6);
  Matrix x(24, 3), y(24, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
  std::vector<std::size_t> rows(24);
  std::iota(rows.begin(), rows.end(), 0);
  MlpSpec spec;
  spec.widths = {3, 8, 8, 2};
  Rng init(1);
  Mlp a(spec, init), b(spec, init);
  SupervisedObjective mse(a, x, y, {LossKind::Mse, 0.5}, x, y);
  SupervisedObjective pin(b, x, y, {LossKind::Pinball, 0.3}, x, y);
  const double e_mse = oracle::gradient_check(mse, rows, 100, 11);
  const double e_pin = oracle::gradient_check(pin, rows, 100, 12);

  CvaeConfig cc;
  cc.latent_dim = 2;
  cc.hidden = {4, 4};
  cc.dropout = 0.0;
  cc.kl_weight = 0.5;
  CvaeModel model = make_cvae(3, 2, cc);
  CvaeObjective cvae(model, x, y, x, y, 3);
  Matrix eps(2, 24);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  cvae.fix_noise(eps, false);
  const double e_cvae = oracle::gradient_check(cvae, rows, 100, 13);
  const double worst = std::max({e_mse, e_pin, e_cvae});
  return {worst <= 1e-4, "max relative error mse " + fmt(e_mse, 2) + ", pinball " + fmt(e_pin, 2) + ", cvae " +
                             fmt(e_cvae, 2)};
}

// 7 -------------------------------------------------------------------------

Outcome pinball_minimizer() {
  Rng rng(7);
  const int n = 1001;
  Matrix x = Matrix::Zero(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) y(i, 0) = rng.normal();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end());
  bool ok = true;
  std::string detail;
  for (double alpha : {0.1, 0.5, 0.9}) {
    MlpSpec spec;
    spec.widths = {1, 1};
    Rng init(0);
    Mlp net(spec, init);
    TrainConfig tc;
    tc.learning_rate = 0.01;
    tc.batch_size = n;
    tc.max_epochs = 3000;
    tc.patience = 3000;
    fit_supervised(net, x, y, {LossKind::Pinball, alpha}, tc, x, y);
    const double c = net.forward(Vector::Zero(1))[0];
    // Any minimiser lies between the order statistics around ceil(alpha n).
    const auto k = static_cast<std::size_t>(std::ceil(alpha * n));
    const double lo = sorted[k - 2], hi = sorted[std::min<std::size_t>(k, n - 1)];
    ok = ok && c >= lo && c <= hi;
    detail += std::string(detail.empty() ? "" : ", ") + "alpha " + fmt(alpha, 2) + ": " + fmt(c, 5) + " in [" +
              fmt(lo, 5) + ", " + fmt(hi, 5) + "]";
  }
  return {ok, detail};
}

// 8 -------------------------------------------------------------------------

Outcome grid_fidelity() {
  const std::size_t expected[3][2] = {{3025, 10000}, {103823, 42875}, {234256, 104976}};
  bool ok = true;
  std::string detail;
  Rng rng(8);
  for (int d = 2; d <= 4; ++d) {
    Matrix y(500, d);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    const auto a = build_grid(y, GridPurpose::AreaMeasurement).size();
    const auto r = build_grid(y, GridPurpose::RegionDiscretization).size();
    ok = ok && a == expected[d - 2][0] && r == expected[d - 2][1];
    detail += std::string(detail.empty() ? "" : ", ") + "d=" + std::to_string(d) + " " + std::to_string(a) + "/" +
              std::to_string(r);
  }
  return {ok, detail};
}

// 9 -------------------------------------------------------------------------

int grid_components(const std::vector<char>& inside, int nx, int ny) {
  std::vector<char> seen(inside.size(), 0);
  int count = 0;
  for (int s = 0; s < nx * ny; ++s) {
    if (!inside[static_cast<std::size_t>(s)] || seen[static_cast<std::size_t>(s)]) continue;
    ++count;
    std::deque<int> queue{s};
    seen[static_cast<std::size_t>(s)] = 1;
    while (!queue.empty()) {
      const int c = queue.front();
      queue.pop_front();
      const int i = c / ny, j = c % ny;
      for (const auto& [a, b] : {std::pair{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}}) {
        if (a < 0 || a >= nx || b < 0 || b >= ny) continue;
        const auto id = static_cast<std::size_t>(a * ny + b);
        if (inside[id] && !seen[id]) {
          seen[id] = 1;
          queue.push_back(a * ny + b);
        }
      }
    }
  }
  return count;
}

Outcome shrink_sanity() {
  const Grid area_grid({-6.0, -6.0}, {6.0, 6.0}, {55, 55}, GridPurpose::AreaMeasurement);
  const Grid region_grid({-6.0, -6.0}, {6.0, 6.0}, {100, 100}, GridPurpose::RegionDiscretization);
  const PointMatrix cells = region_grid.points();
  // Discs of region-grid points around a moving centre; the noise is small
  // enough that the base regions overcover and calibration shrinks them.
  auto provider = std::make_shared<FunctionRegionProvider>(2, [cells](const Vector& x) {
    const Vector m = oracle::oracle_mean(x[0]);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < cells.rows(); ++i)
      if ((cells.row(i).transpose() - m).norm() <= 2.5) keep.push_back(i);
    DiscreteRegion r;
    r.points.resize(static_cast<Eigen::Index>(keep.size()), 2);
    for (std::size_t k = 0; k < keep.size(); ++k) r.points.row(static_cast<Eigen::Index>(k)) = cells.row(keep[k]);
    r.source_x = x;
    return r;
  });
  Rng rng(9);
  const int n = 199;
  Matrix x(n, 1), y(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(0.0, 3.0);
    const Vector m = oracle::oracle_mean(x(i, 0));
    y(i, 0) = m[0] + 0.8 * rng.normal();
    y(i, 1) = m[1] + 0.8 * rng.normal();
  }
  CalibrationOptions options;
  options.complement_grid = area_grid;
  const CalibratedRule rule = calibrate(provider, x, y, 0.1, options);
  if (rule.mode != CalibrationMode::Shrink)
    return {false, "calibration chose grow (c_init " + fmt(rule.c_init) + ")"};

  const PointMatrix probe = area_grid.points();
  std::size_t outside_base = 0, inside_total = 0, disconnected = 0, empty = 0;
  for (int i = 0; i < n; ++i) {
    const Vector xi = x.row(i).transpose();
    const PreparedRegion pr = rule.prepare(xi);
    const KdTree base(pr.base().points);
    std::vector<char> inside(static_cast<std::size_t>(probe.rows()), 0);
    std::size_t count = 0;
    for (Eigen::Index k = 0; k < probe.rows(); ++k) {
      if (!pr.contains(probe.row(k).data())) continue;
      inside[static_cast<std::size_t>(k)] = 1;
      ++count;
      if (base.nearest(probe.row(k).data()) > rule.gamma_init_median) ++outside_base;
    }
    inside_total += count;
    if (count == 0) ++empty;
    else if (grid_components(inside, area_grid.cells()[0], area_grid.cells()[1]) != 1) ++disconnected;
  }
  const bool ok = outside_base == 0 && disconnected == 0 && empty == 0;
  return {ok, "shrink with c_init " + fmt(rule.c_init) + ", gamma_cal " + fmt(rule.gamma_cal) + "; " +
                  std::to_string(outside_base) + " of " + std::to_string(inside_total) +
                  " calibrated grid points outside the base region over " + std::to_string(n) +
                  " calibration inputs, " + std::to_string(disconnected) + " disconnected, " +
                  std::to_string(empty) + " empty"};
}

// 10 ------------------------------------------------------------------------

Outcome support_containment() {
  desk_rows(2);
  const ExperimentConfig config = desk_config(2);
  const Dataset data = load_dataset(config);
  const std::vector<double> xs = {1.0, 1.5, 2.0, 2.5, 3.0};
  std::size_t st_total = 0, st_near = 0, np_total = 0, np_far = 0;
  for (const std::uint64_t seed : config.seeds) {
    const SeedContext ctx = prepare_seed(config, data, seed);
    const KdTree train(PointMatrix(ctx.y_train));
    std::vector<double> spacing(static_cast<std::size_t>(ctx.y_train.rows()));
    for (Eigen::Index i = 0; i < ctx.y_train.rows(); ++i)
      spacing[static_cast<std::size_t>(i)] =
          std::sqrt(train.nearest_squared(train.points().row(i).data(), static_cast<std::size_t>(i)));
    const double limit = 3.0 * interpolated_quantile(spacing, 0.5);
    const FittedMethod st = load_method(method_dir(config, "stdqr", seed), config, ctx, "stdqr");
    const FittedMethod np = load_method(method_dir(config, "npdqr", seed), config, ctx, "npdqr");
    for (const double xv : xs) {
      const Vector x = ctx.normalized.x_stats.apply(Matrix::Constant(1, 1, xv)).row(0).transpose();
      const DiscreteRegion r = st.provider->region(x);
      for (Eigen::Index k = 0; k < r.points.rows(); ++k) st_near += train.nearest(r.points.row(k).data()) <= limit;
      st_total += r.size();
      if (xv == 1.5) {
        const DiscreteRegion q = np.provider->region(x);
        for (Eigen::Index k = 0; k < q.points.rows(); ++k) np_far += train.nearest(q.points.row(k).data()) > limit;
        np_total += q.size();
      }
    }
  }
  const double st_frac = st_total ? static_cast<double>(st_near) / static_cast<double>(st_total) : 0.0;
  const double np_frac = np_total ? static_cast<double>(np_far) / static_cast<double>(np_total) : 0.0;
  return {st_total > 0 && np_total > 0 && st_frac >= 0.95 && np_frac >= 0.10,
          "stdqr " + fmt(100 * st_frac, 4) + "% of " + std::to_string(st_total) +
              " region points near the training responses (need >= 95%); npdqr at x=1.5 " + fmt(100 * np_frac, 4) +
              "% of " + std::to_string(np_total) + " points away from them (need >= 10%)"};
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("MQR_ACCEPTANCE_OUT")) g_out = env;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      std::cerr << "usage: mqr_acceptance [--only 1,2,...] [--out DIR]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"analytic directional coverage", analytic_coverage},
      {"conformal guarantee on oracle regions", conformal_guarantee},
      {"desk-scale calibrated coverage, nonlinear d=2", desk_coverage},
      {"area ordering, nonlinear d=2 and d=3", area_ordering},
      {"naive rectangle coverage bound", naive_bound},
      {"gradient integrity", gradient_integrity},
      {"pinball minimiser", pinball_minimizer},
      {"grid fidelity", grid_fidelity},
      {"shrink sanity", shrink_sanity},
      {"support containment of decoded regions", support_containment},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << "CRITERION " << id << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
