#include "mqr/naive_qr.hpp"

#include "mqr/calibration.hpp"
#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mqr {

const char* to_string(LevelRule rule) { return rule == LevelRule::MainText ? "main" : "appendix"; }

LevelRule level_rule_from_string(const std::string& s) {
  if (s == "main") return LevelRule::MainText;
  if (s == "appendix") return LevelRule::Appendix;
  throw SpecError("unknown naive level rule '" + s + "' (expected main or appendix)");
}

std::pair<double, double> naive_levels(double alpha, int d, LevelRule rule) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("naive_levels: alpha must lie in (0,1)");
  if (d < 1) throw InvalidArgument("naive_levels: dimension must be >= 1");
  const double beta = alpha / d;
  const double tail = rule == LevelRule::MainText ? beta / 2.0 : beta;
  if (!(tail < 0.5)) throw InvalidArgument("naive_levels: levels cross");
  return {tail, 1.0 - tail};
}

bool Rectangle::contains(const double* y) const {
  for (Eigen::Index j = 0; j < lower.size(); ++j)
    if (y[j] < lower[j] || y[j] > upper[j]) return false;
  return true;
}

double Rectangle::volume() const {
  double v = 1.0;
  for (Eigen::Index j = 0; j < lower.size(); ++j) v *= std::max(0.0, upper[j] - lower[j]);
  return v;
}

std::size_t rectangle_area(const Rectangle& rect, const Grid& grid) {
  if (rect.lower.size() != grid.dim()) throw InvalidArgument("rectangle_area: dimension mismatch");
  std::size_t total = 1;
  for (int j = 0; j < grid.dim(); ++j) {
    const auto a = static_cast<std::size_t>(j);
    std::size_t inside = 0;
    for (int i = 0; i < grid.cells()[a]; ++i) {
      // Same expression as Grid::point so counts agree with a full scan.
      const double c = grid.low()[a] + (static_cast<double>(i) + 0.5) * grid.step(j);
      if (c >= rect.lower[j] && c <= rect.upper[j]) ++inside;
    }
    total *= inside;
  }
  return total;
}

double cqr_score(const Vector& lo, const Vector& hi, const Vector& y) {
  if (lo.size() != y.size() || hi.size() != y.size() || y.size() == 0)
    throw InvalidArgument("cqr_score: shape mismatch");
  double s = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < y.size(); ++j) s = std::max({s, lo[j] - y[j], y[j] - hi[j]});
  return s;
}

void NaiveModel::quantiles(const Matrix& x, Matrix& lo, Matrix& hi) const {
  if (x.cols() != feature_dim) throw InvalidArgument("NaiveModel: feature dimension mismatch");
  const Matrix xt = x.transpose();
  lo.resize(x.rows(), response_dim());
  hi.resize(x.rows(), response_dim());
  for (int j = 0; j < response_dim(); ++j) {
    const auto a = static_cast<std::size_t>(j);
    lo.col(j) = lower[a].predict(xt).row(0).transpose();
    hi.col(j) = upper[a].predict(xt).row(0).transpose();
  }
}

Rectangle NaiveModel::region(const Vector& x) const {
  Matrix lo, hi;
  quantiles(x.transpose(), lo, hi);
  Rectangle r;
  r.lower = lo.row(0).transpose().array() - q;
  r.upper = hi.row(0).transpose().array() + q;
  return r;
}

double NaiveModel::score(const Vector& x, const Vector& y) const {
  Matrix lo, hi;
  quantiles(x.transpose(), lo, hi);
  return cqr_score(lo.row(0).transpose(), hi.row(0).transpose(), y);
}

bool NaiveModel::contains(const Vector& x, const Vector& y) const {
  if (y.size() != response_dim()) throw InvalidArgument("NaiveModel::contains: response length mismatch");
  return region(x).contains(y);
}

nlohmann::json NaiveModel::to_json() const {
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
  for (const auto& m : lower) lo.push_back(m.to_json());
  for (const auto& m : upper) hi.push_back(m.to_json());
  return {{"format", "mqr-naive"}, {"version", 1},        {"feature_dim", feature_dim},
          {"level_lo", level_lo},  {"level_hi", level_hi}, {"q", q},
          {"calibrated", calibrated}, {"lower", lo},       {"upper", hi}};
}

NaiveModel NaiveModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mqr-naive") throw ParseError(0, 0, "not a naive model file");
  NaiveModel m;
  m.feature_dim = j.at("feature_dim").get<int>();
  m.level_lo = j.at("level_lo").get<double>();
  m.level_hi = j.at("level_hi").get<double>();
  m.q = j.at("q").get<double>();
  m.calibrated = j.at("calibrated").get<bool>();
  for (const auto& n : j.at("lower")) m.lower.push_back(Mlp::from_json(n));
  for (const auto& n : j.at("upper")) m.upper.push_back(Mlp::from_json(n));
  if (m.lower.size() != m.upper.size()) throw ParseError(0, 0, "naive model net counts differ");
  return m;
}

void NaiveModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump();
}

NaiveModel NaiveModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

NaiveModel fit_naive(const Matrix& x, const Matrix& y, double alpha, const NaiveConfig& config,
                     const Matrix& x_val, const Matrix& y_val) {
  if (x.rows() == 0 || x.rows() != y.rows()) throw InvalidArgument("fit_naive: bad training set");
  const int p = static_cast<int>(x.cols());
  const int d = static_cast<int>(y.cols());
  NaiveModel model;
  model.feature_dim = p;
  std::tie(model.level_lo, model.level_hi) = naive_levels(alpha, d, config.rule);

  MlpSpec spec;
  spec.widths.push_back(p);
  spec.widths.insert(spec.widths.end(), config.hidden.begin(), config.hidden.end());
  spec.widths.push_back(1);
  spec.leaky_slope = config.leaky_slope;
  spec.dropout = config.dropout;
  spec.batch_norm = config.batch_norm;

  for (int j = 0; j < d; ++j) {
    for (int side = 0; side < 2; ++side) {
      const double level = side == 0 ? model.level_lo : model.level_hi;
      const auto stream = static_cast<std::uint64_t>(2 * j + side);
      Rng init(derive_seed(config.seed, 1, stream));
      Mlp net(spec, init);
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, 2, stream);
      fit_supervised(net, x, y.col(j), LossSpec{LossKind::Pinball, level}, tc, x_val, y_val.col(j));
      (side == 0 ? model.lower : model.upper).push_back(std::move(net));
    }
  }
  return model;
}

void calibrate_naive(NaiveModel& model, const Matrix& x_cal, const Matrix& y_cal, double alpha) {
  if (x_cal.rows() == 0 || x_cal.rows() != y_cal.rows())
    throw CalibrationSetTooSmall("calibrate_naive: empty or unpaired calibration set");
  const auto n = static_cast<std::size_t>(x_cal.rows());
  const std::size_t k = grow_rank(n, alpha);
  if (k < 1 || k > n)
    throw CalibrationSetTooSmall("calibrate_naive: rank " + std::to_string(k) +
                                 " exceeds calibration size " + std::to_string(n));
  Matrix lo, hi;
  model.quantiles(x_cal, lo, hi);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    scores[i] = cqr_score(lo.row(r).transpose(), hi.row(r).transpose(), y_cal.row(r).transpose());
  }
  model.q = empirical_quantile(scores, k);
  model.calibrated = true;
}

}  // namespace mqr
