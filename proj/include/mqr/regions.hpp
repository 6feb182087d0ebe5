#pragma once

// Lattices over the response (or latent) space, point-set distance queries
// and grid-based area measurement.

#include "mqr/numerics.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <span>
#include <vector>

namespace mqr {

// Point clouds: one point per row, rows contiguous in memory.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class GridPurpose { AreaMeasurement, RegionDiscretization };

const char* to_string(GridPurpose purpose);
GridPurpose grid_purpose_from_string(const std::string& s);

// Cells per axis for a purpose and dimension (1..4).
int default_cells_per_axis(int dim, GridPurpose purpose);

/// Equally spaced lattice of cell centres over an axis-aligned box.
/// Points are enumerated in row-major order: the last axis varies fastest.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<double> low, std::vector<double> high, std::vector<int> cells,
       GridPurpose purpose);

  int dim() const { return static_cast<int>(low_.size()); }
  std::size_t size() const;
  const std::vector<double>& low() const { return low_; }
  const std::vector<double>& high() const { return high_; }
  const std::vector<int>& cells() const { return cells_; }
  GridPurpose purpose() const { return purpose_; }
  double step(int axis) const;
  double cell_volume() const;

  void point(std::size_t index, double* out) const;
  PointMatrix points() const;
  Vector center() const;

  nlohmann::json to_json() const;
  static Grid from_json(const nlohmann::json& j);
  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<double> low_;
  std::vector<double> high_;
  std::vector<int> cells_;
  GridPurpose purpose_ = GridPurpose::AreaMeasurement;
};

/// Bounds are the 1% and 99% empirical quantiles of each response column
/// widened by 1.0 (discretization) or 0.2 (area measurement). Throws
/// UnsupportedDimension outside 1..4 columns.
Grid build_grid(const Matrix& responses, GridPurpose purpose);

// Exact minimum Euclidean distance from y to the carrier rows. Throws
// EmptyCarrier when the carrier has no rows.
double min_distance(std::span<const double> y, const PointMatrix& carrier);

/// Static k-d tree for exact nearest-neighbour queries. Results equal the
/// brute-force scan bit for bit: distances are accumulated in the same
/// order and only strictly farther subtrees are pruned.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(PointMatrix points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  bool empty() const { return points_.rows() == 0; }
  int dim() const { return static_cast<int>(points_.cols()); }
  const PointMatrix& points() const { return points_; }

  // Squared distance to the nearest point, skipping index `exclude`.
  // Returns +inf for an empty tree.
  double nearest_squared(const double* query, std::size_t exclude = static_cast<std::size_t>(-1)) const;
  double nearest(const double* query) const;
  // True iff some point lies within (<=) radius of the query.
  bool any_within(const double* query, double radius) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t begin = 0, end = 0;
    int left = -1, right = -1;
  };
  int build(std::size_t begin, std::size_t end, int depth);
  void search(int node, const double* q, std::size_t exclude, double& best) const;
  bool search_within(int node, const double* q, double radius) const;

  PointMatrix points_;
  std::vector<Node> nodes_;
};

// Number of grid points for which the predicate holds.
std::size_t area(const std::function<bool(std::span<const double>)>& inside, const Grid& grid);

}  // namespace mqr
