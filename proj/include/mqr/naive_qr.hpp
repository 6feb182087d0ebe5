#pragma once

// Per-dimension quantile regression: a lower and an upper quantile net for
// every response coordinate, combined into a hyperrectangle and calibrated
// with a max-over-coordinates CQR score.

#include "mqr/nn.hpp"
#include "mqr/regions.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace mqr {

// MainText: (alpha/(2d), 1 - alpha/(2d)). Appendix: (alpha/d, 1 - alpha/d).
enum class LevelRule { MainText, Appendix };
const char* to_string(LevelRule rule);
LevelRule level_rule_from_string(const std::string& s);

std::pair<double, double> naive_levels(double alpha, int d, LevelRule rule = LevelRule::MainText);

struct Rectangle {
  Vector lower;
  Vector upper;

  bool contains(const double* y) const;
  bool contains(const Vector& y) const { return contains(y.data()); }
  double volume() const;  // 0 when some side is inverted
};

// Grid points inside the rectangle, counted axis by axis.
std::size_t rectangle_area(const Rectangle& rect, const Grid& grid);

// max_j max(lo_j - y_j, y_j - hi_j).
double cqr_score(const Vector& lo, const Vector& hi, const Vector& y);

struct NaiveConfig {
  std::vector<int> hidden = {64, 64, 64};
  double leaky_slope = 0.2;
  double dropout = 0.0;
  bool batch_norm = false;
  TrainConfig train{};
  LevelRule rule = LevelRule::MainText;
  std::uint64_t seed = 0;
};

class NaiveModel {
 public:
  std::vector<Mlp> lower;  // one net per response coordinate
  std::vector<Mlp> upper;
  double level_lo = 0.025;
  double level_hi = 0.975;
  double q = 0.0;  // calibration offset
  bool calibrated = false;
  int feature_dim = 0;

  int response_dim() const { return static_cast<int>(lower.size()); }

  // Uncalibrated quantile estimates, one row per input row.
  void quantiles(const Matrix& x, Matrix& lo, Matrix& hi) const;
  Rectangle region(const Vector& x) const;
  double score(const Vector& x, const Vector& y) const;
  bool contains(const Vector& x, const Vector& y) const;

  nlohmann::json to_json() const;
  static NaiveModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static NaiveModel load(const std::string& path);
};

NaiveModel fit_naive(const Matrix& x, const Matrix& y, double alpha, const NaiveConfig& config,
                     const Matrix& x_val, const Matrix& y_val);

/// Sets q to the ceil((1-alpha)(n+1))-th smallest calibration score. Throws
/// CalibrationSetTooSmall when that rank exceeds n.
void calibrate_naive(NaiveModel& model, const Matrix& x_cal, const Matrix& y_cal, double alpha);

}  // namespace mqr
