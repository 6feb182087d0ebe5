#include "mqr/errors.hpp"
#include "mqr/naive_qr.hpp"

#include <doctest.h>

#include <cmath>

using namespace mqr;

namespace {

Mlp constant_net(int p, double value) {
  MlpSpec spec;
  spec.widths = {p, 1};
  Rng rng(0);
  Mlp net(spec, rng);
  net.layers()[0].weight.setZero();
  net.layers()[0].bias.setConstant(value);
  return net;
}

NaiveModel box_model(const Vector& lo, const Vector& hi) {
  NaiveModel m;
  m.feature_dim = 1;
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    m.lower.push_back(constant_net(1, lo[j]));
    m.upper.push_back(constant_net(1, hi[j]));
  }
  return m;
}

}  // namespace

TEST_CASE("per-dimension levels") {
  auto [lo, hi] = naive_levels(0.1, 2);
  CHECK(lo == doctest::Approx(0.025));
  CHECK(hi == doctest::Approx(0.975));
  auto [alo, ahi] = naive_levels(0.1, 2, LevelRule::Appendix);
  CHECK(alo == doctest::Approx(0.05));
  CHECK(ahi == doctest::Approx(0.95));
  CHECK(level_rule_from_string("appendix") == LevelRule::Appendix);
  CHECK_THROWS_AS(level_rule_from_string("x"), SpecError);
}

TEST_CASE("cqr score") {
  const Vector lo = Vector::Zero(2), hi = Vector::Ones(2);
  Vector y(2);
  y << 0.5, 0.5;
  CHECK(cqr_score(lo, hi, y) == doctest::Approx(-0.5));
  y << 2, 0.5;
  CHECK(cqr_score(lo, hi, y) == doctest::Approx(1.0));
  y << 1, 0.5;
  CHECK(cqr_score(lo, hi, y) == 0.0);
}

TEST_CASE("calibrated rectangles") {
  NaiveModel m = box_model(Vector::Zero(2), Vector::Ones(2));
  const Vector x = Vector::Zero(1);
  m.q = 1.0;
  const Rectangle r = m.region(x);
  CHECK(r.volume() == doctest::Approx(9.0));
  CHECK(r.lower[0] == doctest::Approx(-1.0));
  CHECK(r.upper[1] == doctest::Approx(2.0));

  NaiveModel point = box_model(Vector::Constant(2, 0.3), Vector::Constant(2, 0.3));
  CHECK(point.region(x).volume() == 0.0);
  CHECK(point.contains(x, Vector::Constant(2, 0.3)));

  // Wider offsets give supersets.
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    Vector y(2);
    y << rng.uniform(-3, 3), rng.uniform(-3, 3);
    m.q = 0.2;
    const bool small = m.contains(x, y);
    m.q = 0.7;
    CHECK((!small || m.contains(x, y)));
    CHECK(m.contains(x, y) == (y[0] >= -0.7 && y[0] <= 1.7 && y[1] >= -0.7 && y[1] <= 1.7));
  }
}

TEST_CASE("rectangle area on the grid") {
  const Grid g({-2, -2}, {3, 3}, {55, 55}, GridPurpose::AreaMeasurement);
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Rectangle r;
    r.lower = Vector(2);
    r.upper = Vector(2);
    r.lower << rng.uniform(-2, 1), rng.uniform(-2, 1);
    r.upper << r.lower[0] + rng.uniform(0, 2), r.lower[1] + rng.uniform(0, 2);
    std::size_t brute = 0;
    const PointMatrix pts = g.points();
    for (Eigen::Index i = 0; i < pts.rows(); ++i) brute += r.contains(pts.row(i).data());
    CHECK(rectangle_area(r, g) == brute);
    const double cells = r.volume() / g.cell_volume();
    const double faces = 2 * ((r.upper[0] - r.lower[0]) / g.step(1) + (r.upper[1] - r.lower[1]) / g.step(0)) + 4;
    CHECK(std::abs(static_cast<double>(brute) - cells) <= faces);
  }
}

TEST_CASE("oracle per-dimension quantiles on uniforms") {
  for (int d = 2; d <= 4; ++d) {
    const auto [lo, hi] = naive_levels(0.1, d);
    Rng rng(static_cast<std::uint64_t>(d));
    std::size_t in = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      bool ok = true;
      for (int j = 0; j < d; ++j) {
        const double u = rng.uniform();
        ok = ok && u >= lo && u <= hi;
      }
      in += ok;
    }
    const double c = static_cast<double>(in) / n;
    CHECK(c >= 0.9);
    CHECK(std::abs(c - std::pow(1.0 - 0.1 / d, d)) < 0.005);
  }
}

TEST_CASE("fitting and calibration") {
  Rng rng(3);
  Matrix x(256, 1), y(256, 2);
  for (int i = 0; i < 256; ++i) x(i, 0) = rng.uniform();
  y.col(0).setConstant(0.7);
  y.col(1).setConstant(-0.4);
  NaiveConfig c;
  c.hidden = {8};
  c.train.learning_rate = 1e-2;
  c.train.max_epochs = 300;
  c.train.patience = 300;
  c.train.batch_size = 64;
  const NaiveModel m = fit_naive(x, y, 0.1, c, x, y);
  Matrix lo, hi;
  m.quantiles(x.topRows(5), lo, hi);
  CHECK((lo.col(0).array() - 0.7).abs().maxCoeff() < 0.05);
  CHECK((hi.col(1).array() + 0.4).abs().maxCoeff() < 0.05);

  NaiveModel wide = box_model(Vector::Constant(2, -10), Vector::Constant(2, 10));
  Matrix xc = Matrix::Zero(99, 1), yc(99, 2);
  for (Eigen::Index i = 0; i < yc.size(); ++i) yc.data()[i] = rng.normal();
  calibrate_naive(wide, xc, yc, 0.1);
  CHECK(wide.calibrated);
  CHECK(wide.q < 0.0);
  std::vector<double> scores;
  for (Eigen::Index i = 0; i < 99; ++i) scores.push_back(wide.score(xc.row(i).transpose(), yc.row(i).transpose()));
  std::sort(scores.begin(), scores.end());
  CHECK(wide.q == scores[89]);
  CHECK_THROWS_AS(calibrate_naive(wide, xc.topRows(8), yc.topRows(8), 0.1), CalibrationSetTooSmall);

  const NaiveModel back = NaiveModel::from_json(nlohmann::json::parse(wide.to_json().dump()));
  CHECK(back.q == wide.q);
  CHECK(back.region(Vector::Zero(1)).lower == wide.region(Vector::Zero(1)).lower);
}
