#pragma once

// Distance-based conformal calibration of point-set quantile regions.
//
// A region provider maps an input x to a finite point set R(x). The base
// region S^g(x) is the g-dilation of R(x). Calibration measures the coverage
// c_init of S^{g_init} on the calibration set and then either grows the
// region (distance of Y_i to R(X_i)) or shrinks it (distance of Y_i to a
// discretised complement of the base region), picking gamma_cal as an order
// statistic of those conformity scores.

#include "mqr/regions.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <limits>
#include <memory>
#include <optional>

namespace mqr {

enum class Space { Response, Latent };

struct DiscreteRegion {
  PointMatrix points;  // one point per row
  Space space = Space::Response;
  Vector source_x;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  bool empty() const { return points.rows() == 0; }
};

class RegionProvider {
 public:
  virtual ~RegionProvider() = default;
  virtual int response_dim() const = 0;
  virtual DiscreteRegion region(const Vector& x) const = 0;
};

class FunctionRegionProvider final : public RegionProvider {
 public:
  FunctionRegionProvider(int dim, std::function<DiscreteRegion(const Vector&)> fn)
      : dim_(dim), fn_(std::move(fn)) {}
  int response_dim() const override { return dim_; }
  DiscreteRegion region(const Vector& x) const override { return fn_(x); }

 private:
  int dim_;
  std::function<DiscreteRegion(const Vector&)> fn_;
};

/// ceil(0.9 m)-th smallest nearest-neighbour spacing of the region points.
/// Throws DegenerateRegion for fewer than two points.
double gamma_init(const DiscreteRegion& region);
double gamma_init(const KdTree& tree);

// min over region points of |a - y| <= gamma; false for an empty region.
bool base_contains(const DiscreteRegion& region, const Vector& y, double gamma);

enum class CalibrationMode { Grow, Shrink };
const char* to_string(CalibrationMode mode);

struct CalibrationOptions {
  // Used as gamma_init when a region has fewer than two points.
  double fallback_gamma = 0.0;
  // Distance reference for empty regions under Grow; defaults to the
  // centre of complement_grid, or the origin.
  std::optional<Vector> anchor;
  // Finite carrier for the complement in Shrink mode (area grid).
  std::optional<Grid> complement_grid;
};

class CalibratedRule;

/// Membership oracle of the calibrated region for one fixed input.
class PreparedRegion {
 public:
  bool contains(const double* y) const;
  bool contains(const Vector& y) const { return contains(y.data()); }
  // Number of grid points inside the calibrated region.
  std::size_t area(const Grid& grid) const;
  const DiscreteRegion& base() const { return base_; }

 private:
  friend class CalibratedRule;
  DiscreteRegion base_;
  CalibrationMode mode_ = CalibrationMode::Grow;
  double gamma_cal_ = 0.0;
  KdTree region_;
  bool use_anchor_ = false;
  Vector anchor_;
  // Shrink only: complement carrier = grid points farther than threshold_.
  std::optional<Grid> grid_;
  double threshold_ = 0.0;
};

/// Distance queries against the complement carrier of a region: the grid
/// points farther than `threshold` from every region point. Searches grow
/// outwards from the query cell, so only nearby grid points are examined.
class GridComplement {
 public:
  GridComplement(const Grid& grid, const KdTree& region, double threshold);
  bool is_complement(const double* grid_point) const;
  // Exact distance to the nearest complement point if it is below cap,
  // otherwise +inf. With cap = +inf an empty complement also yields +inf.
  double nearest(const double* y, double cap = std::numeric_limits<double>::infinity()) const;

 private:
  const Grid& grid_;
  const KdTree& region_;
  double threshold_;
};

class CalibratedRule {
 public:
  CalibrationMode mode = CalibrationMode::Grow;
  double alpha = 0.1;
  std::size_t n_cal = 0;
  double c_init = 0.0;
  double gamma_cal = 0.0;
  // Statistics of the per-region gamma_init over the calibration set; the
  // median is the complement threshold in Shrink mode.
  double gamma_init_median = 0.0;
  double gamma_init_mean = 0.0;
  double gamma_init_min = 0.0;
  double gamma_init_max = 0.0;
  std::size_t empty_regions = 0;
  Vector anchor;
  std::optional<Grid> complement_grid;
  std::shared_ptr<const RegionProvider> provider;

  PreparedRegion prepare(const Vector& x) const;
  PreparedRegion prepare(DiscreteRegion base) const;
  bool contains(const Vector& x, const Vector& y) const { return prepare(x).contains(y); }

  // Calibration report (everything but the provider).
  nlohmann::json to_json() const;
  static CalibratedRule from_json(const nlohmann::json& j,
                                  std::shared_ptr<const RegionProvider> provider);
};

// Index k = ceil((n+1)(1-alpha)) used by Grow mode; floor((n+1) alpha) by Shrink.
std::size_t grow_rank(std::size_t n, double alpha);
std::size_t shrink_rank(std::size_t n, double alpha);

// Complement carrier materialised as a point matrix.
PointMatrix complement_points(const KdTree& region, const Grid& grid, double threshold);

/// Fraction of calibration pairs inside their base region S^{gamma_init}.
double initial_coverage(const RegionProvider& provider, const Matrix& x, const Matrix& y,
                        const CalibrationOptions& options = {});

/// Runs the grow/shrink calibration on (x, y) rows. Throws
/// CalibrationSetTooSmall when the required order statistic does not exist
/// and DegenerateComplement when a Shrink complement is empty.
CalibratedRule calibrate(std::shared_ptr<const RegionProvider> provider, const Matrix& x,
                         const Matrix& y, double alpha, const CalibrationOptions& options = {});

bool calibrated_contains(const CalibratedRule& rule, const Vector& x, const Vector& y);

}  // namespace mqr
