#pragma once

// Non-parametric directional quantile regression. A network f(x, u) predicts
// the level-alpha quantile of u'y along each unit direction u; the region at
// x is the intersection of the half-spaces {y : u'y >= f(x, u)}.

#include "mqr/calibration.hpp"
#include "mqr/nn.hpp"
#include "mqr/regions.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace mqr {

struct DirectionPool {
  PointMatrix directions;  // one unit vector per row
  std::uint64_t seed = 0;

  int dim() const { return static_cast<int>(directions.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(directions.rows()); }

  nlohmann::json to_json() const;
  static DirectionPool from_json(const nlohmann::json& j);
};

// Normalised standard normal draws. Throws InvalidArgument for d < 1 or count < 1.
DirectionPool sample_direction_pool(int d, std::size_t count, std::uint64_t seed);

struct NpdqrConfig {
  std::vector<int> hidden = {64, 64, 64};
  double leaky_slope = 0.2;
  double dropout = 0.0;
  bool batch_norm = false;
  TrainConfig train{};
  std::size_t pool_size = 2048;
  std::size_t per_step = 32;
  std::size_t membership = 256;
  std::uint64_t seed = 0;
};

class NpdqrModel {
 public:
  Mlp net;
  DirectionPool pool;
  double alpha = 0.05;  // lower directional level; the half-spaces each hold 1 - alpha
  int feature_dim = 0;
  std::size_t per_step = 32;
  std::vector<std::size_t> membership_index;  // rows of pool.directions
  PointMatrix membership;                     // the frozen membership directions
  TrainHistory history;

  int response_dim() const { return pool.dim(); }

  // f(x, u) for a single direction.
  double threshold(const Vector& x, const Vector& u) const;
  // f(x, u_k) for every membership direction.
  Vector thresholds(const Vector& x) const;

  bool contains(const Vector& x, const Vector& y) const;
  // Membership given precomputed thresholds.
  bool contains_with(const Vector& thresholds, const double* y) const;

  // Grid points satisfying every membership half-space.
  DiscreteRegion extract_region(const Vector& x, const Grid& grid,
                                Space space = Space::Response) const;

  nlohmann::json to_json() const;
  static NpdqrModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static NpdqrModel load(const std::string& path);
};

/// Trains f on rows (x_i, y_i) with the pinball loss at level alpha on u'y,
/// pairing every batch row with per_step distinct pool directions.
NpdqrModel fit_npdqr(const Matrix& x, const Matrix& y, double alpha, const NpdqrConfig& config,
                     const Matrix& x_val, const Matrix& y_val);

// Region provider over a fixed grid.
class NpdqrRegionProvider final : public RegionProvider {
 public:
  NpdqrRegionProvider(std::shared_ptr<const NpdqrModel> model, Grid grid)
      : model_(std::move(model)), grid_(std::move(grid)) {}
  int response_dim() const override { return model_->response_dim(); }
  DiscreteRegion region(const Vector& x) const override { return model_->extract_region(x, grid_); }
  const Grid& grid() const { return grid_; }

 private:
  std::shared_ptr<const NpdqrModel> model_;
  Grid grid_;
};

}  // namespace mqr
