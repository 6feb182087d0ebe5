#include "mqr/calibration.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mqr {

namespace {

double anchor_distance(const Vector& anchor, const double* y) {
  return std::sqrt(squared_distance(anchor.data(), y, static_cast<int>(anchor.size())));
}

Vector resolve_anchor(const CalibrationOptions& options, int dim) {
  if (options.anchor) {
    if (options.anchor->size() != dim) throw InvalidArgument("calibrate: anchor dimension mismatch");
    return *options.anchor;
  }
  if (options.complement_grid) return options.complement_grid->center();
  return Vector::Zero(dim);
}

// Regions kept in memory between the two calibration passes while their
// total size stays below this many coordinates.
constexpr std::size_t kRegionCacheBudget = 20'000'000;

}  // namespace

double gamma_init(const KdTree& tree) {
  const std::size_t m = tree.size();
  if (m < 2) throw DegenerateRegion("gamma_init: region has fewer than two points");
  std::vector<double> spacing(m);
  const auto& pts = tree.points();
  for (std::size_t i = 0; i < m; ++i)
    spacing[i] = std::sqrt(tree.nearest_squared(pts.row(static_cast<Eigen::Index>(i)).data(), i));
  const std::size_t k = (9 * m + 9) / 10;  // ceil(0.9 m)
  return empirical_quantile(spacing, k);
}

double gamma_init(const DiscreteRegion& region) {
  if (region.size() < 2) throw DegenerateRegion("gamma_init: region has fewer than two points");
  return gamma_init(KdTree(region.points));
}

bool base_contains(const DiscreteRegion& region, const Vector& y, double gamma) {
  if (region.empty()) return false;
  return min_distance(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                      region.points) <= gamma;
}

const char* to_string(CalibrationMode mode) {
  return mode == CalibrationMode::Grow ? "grow" : "shrink";
}

std::size_t grow_rank(std::size_t n, double alpha) {
  const double v = static_cast<double>(n + 1) * (1.0 - alpha);
  return static_cast<std::size_t>(std::ceil(v - 1e-9));
}

std::size_t shrink_rank(std::size_t n, double alpha) {
  const double v = static_cast<double>(n + 1) * alpha;
  return static_cast<std::size_t>(std::floor(v + 1e-9));
}

PointMatrix complement_points(const KdTree& region, const Grid& grid, double threshold) {
  const int d = grid.dim();
  PointMatrix out(static_cast<Eigen::Index>(grid.size()), d);
  Eigen::Index count = 0;
  std::vector<double> p(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    if (region.empty() || !region.any_within(p.data(), threshold)) {
      for (int j = 0; j < d; ++j) out(count, j) = p[static_cast<std::size_t>(j)];
      ++count;
    }
  }
  out.conservativeResize(count, d);
  return out;
}

GridComplement::GridComplement(const Grid& grid, const KdTree& region, double threshold)
    : grid_(grid), region_(region), threshold_(threshold) {}

bool GridComplement::is_complement(const double* grid_point) const {
  return region_.empty() || !region_.any_within(grid_point, threshold_);
}

double GridComplement::nearest(const double* y, double cap) const {
  const int d = grid_.dim();
  const auto& low = grid_.low();
  const auto& cells = grid_.cells();
  std::vector<int> centre(static_cast<std::size_t>(d));
  double min_step = std::numeric_limits<double>::infinity();
  for (int j = 0; j < d; ++j) {
    const auto a = static_cast<std::size_t>(j);
    const double step = grid_.step(j);
    min_step = std::min(min_step, step);
    const double c = std::floor((y[j] - low[a]) / step);
    centre[a] = static_cast<int>(std::clamp(c, 0.0, static_cast<double>(cells[a] - 1)));
  }

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d)),
      idx(static_cast<std::size_t>(d));
  std::vector<double> p(static_cast<std::size_t>(d));
  for (int k = 0;; ++k) {
    bool covers_grid = true;
    for (std::size_t a = 0; a < lo.size(); ++a) {
      lo[a] = std::max(0, centre[a] - k);
      hi[a] = std::min(cells[a] - 1, centre[a] + k);
      if (lo[a] > 0 || hi[a] < cells[a] - 1) covers_grid = false;
      idx[a] = lo[a];
    }
    // Visit the shell of cells at Chebyshev distance exactly k.
    while (true) {
      bool on_shell = false;
      for (std::size_t a = 0; a < idx.size(); ++a)
        if (std::abs(idx[a] - centre[a]) == k) on_shell = true;
      if (on_shell) {
        for (std::size_t a = 0; a < idx.size(); ++a)
          p[a] = low[a] + (static_cast<double>(idx[a]) + 0.5) * grid_.step(static_cast<int>(a));
        const double dist = std::sqrt(squared_distance(p.data(), y, d));
        if (dist < best && dist < cap && is_complement(p.data())) best = dist;
      }
      int a = d - 1;
      while (a >= 0 && idx[static_cast<std::size_t>(a)] == hi[static_cast<std::size_t>(a)]) {
        idx[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
        --a;
      }
      if (a < 0) break;
      ++idx[static_cast<std::size_t>(a)];
    }
    // Every unvisited grid point is farther than k * min_step from y.
    const double reach = static_cast<double>(k) * min_step;
    if (best <= reach || reach >= cap || covers_grid) break;
  }
  return best < cap ? best : std::numeric_limits<double>::infinity();
}

bool PreparedRegion::contains(const double* y) const {
  if (mode_ == CalibrationMode::Grow) {
    if (use_anchor_) return anchor_distance(anchor_, y) <= gamma_cal_;
    return region_.any_within(y, gamma_cal_);
  }
  const GridComplement complement(*grid_, region_, threshold_);
  return complement.nearest(y, gamma_cal_) >= gamma_cal_;
}

std::size_t PreparedRegion::area(const Grid& grid) const {
  std::vector<double> p(static_cast<std::size_t>(grid.dim()));
  std::size_t count = 0;
  if (mode_ == CalibrationMode::Shrink && gamma_cal_ > 0.0) {
    // Materialise the complement once and test each grid point against it.
    const KdTree carrier(complement_points(region_, *grid_, threshold_));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.point(i, p.data());
      if (!carrier.empty() && carrier.nearest(p.data()) < gamma_cal_) continue;
      ++count;
    }
    return count;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    if (contains(p.data())) ++count;
  }
  return count;
}

PreparedRegion CalibratedRule::prepare(const Vector& x) const {
  if (!provider) throw InvalidArgument("CalibratedRule: no region provider attached");
  return prepare(provider->region(x));
}

PreparedRegion CalibratedRule::prepare(DiscreteRegion base) const {
  PreparedRegion out;
  out.mode_ = mode;
  out.gamma_cal_ = gamma_cal;
  if (mode == CalibrationMode::Grow) {
    if (base.empty()) {
      out.use_anchor_ = true;
      out.anchor_ = anchor;
    } else {
      out.region_ = KdTree(base.points);
    }
  } else {
    if (!complement_grid) throw InvalidArgument("CalibratedRule: shrink mode needs a complement grid");
    out.region_ = KdTree(base.points);
    out.grid_ = complement_grid;
    out.threshold_ = gamma_init_median;
  }
  out.base_ = std::move(base);
  return out;
}

nlohmann::json CalibratedRule::to_json() const {
  nlohmann::json j = {{"mode", to_string(mode)},
                      {"alpha", alpha},
                      {"n_cal", n_cal},
                      {"c_init", c_init},
                      {"gamma_cal", gamma_cal},
                      {"gamma_init", {{"median", gamma_init_median},
                                      {"mean", gamma_init_mean},
                                      {"min", gamma_init_min},
                                      {"max", gamma_init_max}}},
                      {"empty_regions", empty_regions},
                      {"anchor", std::vector<double>(anchor.data(), anchor.data() + anchor.size())}};
  if (complement_grid) j["complement_grid"] = complement_grid->to_json();
  return j;
}

CalibratedRule CalibratedRule::from_json(const nlohmann::json& j,
                                         std::shared_ptr<const RegionProvider> provider) {
  CalibratedRule rule;
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "grow")
    rule.mode = CalibrationMode::Grow;
  else if (mode == "shrink")
    rule.mode = CalibrationMode::Shrink;
  else
    throw ParseError(0, 0, "unknown calibration mode '" + mode + "'");
  rule.alpha = j.at("alpha").get<double>();
  rule.n_cal = j.at("n_cal").get<std::size_t>();
  rule.c_init = j.at("c_init").get<double>();
  rule.gamma_cal = j.at("gamma_cal").get<double>();
  const auto& g = j.at("gamma_init");
  rule.gamma_init_median = g.at("median").get<double>();
  rule.gamma_init_mean = g.at("mean").get<double>();
  rule.gamma_init_min = g.at("min").get<double>();
  rule.gamma_init_max = g.at("max").get<double>();
  rule.empty_regions = j.value("empty_regions", std::size_t{0});
  const auto anchor = j.at("anchor").get<std::vector<double>>();
  rule.anchor = Eigen::Map<const Vector>(anchor.data(), static_cast<Eigen::Index>(anchor.size()));
  if (j.contains("complement_grid")) rule.complement_grid = Grid::from_json(j.at("complement_grid"));
  rule.provider = std::move(provider);
  return rule;
}

double initial_coverage(const RegionProvider& provider, const Matrix& x, const Matrix& y,
                        const CalibrationOptions& options) {
  if (x.rows() == 0) throw InvalidArgument("initial_coverage: empty calibration set");
  if (x.rows() != y.rows()) throw InvalidArgument("initial_coverage: row counts differ");
  std::size_t covered = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const DiscreteRegion region = provider.region(x.row(i).transpose());
    if (region.empty()) continue;
    const KdTree tree(region.points);
    const double g = region.size() >= 2 ? gamma_init(tree) : options.fallback_gamma;
    const Vector yi = y.row(i).transpose();
    if (tree.nearest(yi.data()) <= g) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(x.rows());
}

CalibratedRule calibrate(std::shared_ptr<const RegionProvider> provider, const Matrix& x,
                         const Matrix& y, double alpha, const CalibrationOptions& options) {
  if (!provider) throw InvalidArgument("calibrate: null region provider");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("calibrate: alpha must lie in (0,1)");
  if (x.rows() != y.rows()) throw InvalidArgument("calibrate: row counts differ");
  if (x.rows() == 0) throw CalibrationSetTooSmall("calibrate: empty calibration set");
  const int dim = provider->response_dim();
  if (y.cols() != dim) throw InvalidArgument("calibrate: response dimension mismatch");

  const auto n = static_cast<std::size_t>(x.rows());
  CalibratedRule rule;
  rule.alpha = alpha;
  rule.n_cal = n;
  rule.anchor = resolve_anchor(options, dim);
  rule.complement_grid = options.complement_grid;
  rule.provider = provider;

  std::vector<double> gammas(n), grow_scores(n);
  std::vector<DiscreteRegion> cache;
  std::size_t cached_coords = 0;
  bool cache_ok = true;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    DiscreteRegion region = provider->region(x.row(row).transpose());
    const Vector yi = y.row(row).transpose();
    if (region.empty()) {
      ++rule.empty_regions;
      gammas[i] = options.fallback_gamma;
      grow_scores[i] = anchor_distance(rule.anchor, yi.data());
    } else {
      const KdTree tree(region.points);
      gammas[i] = region.size() >= 2 ? gamma_init(tree) : options.fallback_gamma;
      grow_scores[i] = tree.nearest(yi.data());
      if (grow_scores[i] <= gammas[i]) ++covered;
    }
    cached_coords += static_cast<std::size_t>(region.points.size());
    if (cache_ok && cached_coords <= kRegionCacheBudget)
      cache.push_back(std::move(region));
    else {
      cache_ok = false;
      cache.clear();
    }
  }

  rule.c_init = static_cast<double>(covered) / static_cast<double>(n);
  rule.gamma_init_median = interpolated_quantile(gammas, 0.5);
  rule.gamma_init_mean = std::accumulate(gammas.begin(), gammas.end(), 0.0) / static_cast<double>(n);
  rule.gamma_init_min = *std::min_element(gammas.begin(), gammas.end());
  rule.gamma_init_max = *std::max_element(gammas.begin(), gammas.end());

  if (rule.c_init <= 1.0 - alpha) {
    rule.mode = CalibrationMode::Grow;
    const std::size_t k = grow_rank(n, alpha);
    if (k < 1 || k > n)
      throw CalibrationSetTooSmall("calibrate: rank " + std::to_string(k) +
                                   " exceeds calibration size " + std::to_string(n));
    rule.gamma_cal = empirical_quantile(grow_scores, k);
    return rule;
  }

  rule.mode = CalibrationMode::Shrink;
  if (!options.complement_grid)
    throw InvalidArgument("calibrate: shrink mode requires a complement grid");
  const std::size_t k = shrink_rank(n, alpha);
  if (k < 1 || k > n)
    throw CalibrationSetTooSmall("calibrate: shrink rank " + std::to_string(k) +
                                 " is outside [1, " + std::to_string(n) + "]");
  std::vector<double> shrink_scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const DiscreteRegion region =
        cache_ok ? std::move(cache[i]) : provider->region(x.row(row).transpose());
    const KdTree tree(region.points);
    const GridComplement complement(*options.complement_grid, tree, rule.gamma_init_median);
    const Vector yi = y.row(row).transpose();
    shrink_scores[i] = complement.nearest(yi.data());
    if (std::isinf(shrink_scores[i]))
      throw DegenerateComplement("calibrate: empty complement for calibration row " +
                                 std::to_string(i));
  }
  rule.gamma_cal = empirical_quantile(shrink_scores, k);
  return rule;
}

bool calibrated_contains(const CalibratedRule& rule, const Vector& x, const Vector& y) {
  return rule.contains(x, y);
}

}  // namespace mqr
