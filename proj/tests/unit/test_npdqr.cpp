#include "mqr/npdqr.hpp"
#include "mqr/numerics.hpp"

#include <doctest.h>

#include <cmath>

using namespace mqr;

namespace {

// Model whose threshold is the constant c for every (x, u).
NpdqrModel constant_model(int d, double c, std::size_t membership = 256) {
  NpdqrConfig cfg;
  cfg.hidden = {4};
  cfg.membership = membership;
  cfg.pool_size = 2048;
  Rng rng(0);
  NpdqrModel m;
  MlpSpec spec;
  spec.widths = {1 + d, 4, 1};
  m.net = Mlp(spec, rng);
  for (auto* p : m.net.parameters()) p->setZero();
  m.net.layers().back().bias.setConstant(c);
  m.pool = sample_direction_pool(d, 2048, 5);
  m.feature_dim = 1;
  m.alpha = 0.1;
  m.per_step = 32;
  for (std::size_t i = 0; i < membership; ++i) m.membership_index.push_back(i);
  m.membership = m.pool.directions.topRows(static_cast<Eigen::Index>(membership));
  return m;
}

}  // namespace

TEST_CASE("direction pools") {
  const DirectionPool one = sample_direction_pool(1, 4, 1);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(one.directions(i, 0)) == 1.0);
  const DirectionPool three = sample_direction_pool(3, 2048, 2);
  for (Eigen::Index i = 0; i < three.directions.rows(); ++i)
    CHECK(std::abs(three.directions.row(i).norm() - 1.0) <= 1e-9);
  const DirectionPool many = sample_direction_pool(2, 100000, 3);
  CHECK(many.directions.colwise().mean().norm() <= 0.02);
  const DirectionPool back = DirectionPool::from_json(three.to_json());
  CHECK(back.directions == three.directions);
}

TEST_CASE("half-space membership") {
  const NpdqrModel m = constant_model(3, -1.0);
  const Vector x = Vector::Zero(1);
  CHECK(m.contains(x, Vector::Zero(3)));
  Vector far = Vector::Zero(3);
  far[0] = 10;
  CHECK_FALSE(m.contains(x, far));
  CHECK(m.threshold(x, Vector::Unit(3, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("extracted regions") {
  const NpdqrModel m = constant_model(2, -1.0);
  const Grid g({-2, -2}, {2, 2}, {40, 40}, GridPurpose::RegionDiscretization);
  const DiscreteRegion r = m.extract_region(Vector::Zero(1), g);
  const PointMatrix pts = g.points();
  std::size_t ball = 0, mismatch_far = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double n = pts.row(i).norm();
    ball += n <= 1.0;
    const bool inside = m.contains(Vector::Zero(1), pts.row(i).transpose());
    // Away from the boundary by one cell diagonal the answer matches the ball.
    if (std::abs(n - 1.0) > g.step(0) * std::sqrt(2.0)) mismatch_far += inside != (n <= 1.0);
  }
  CHECK(mismatch_far == 0);
  CHECK(std::abs(static_cast<double>(r.size()) - static_cast<double>(ball)) < 0.1 * ball);
  for (Eigen::Index i = 0; i < r.points.rows(); ++i) CHECK(m.contains(Vector::Zero(1), r.points.row(i).transpose()));

  const NpdqrModel none = constant_model(2, 5.0);
  CHECK(none.extract_region(Vector::Zero(1), g).empty());
}

TEST_CASE("gaussian directional quantiles are learned") {
  Rng rng(4);
  const int n = 3000;
  Matrix x(n, 1), y(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform();
    y(i, 0) = rng.normal();
    y(i, 1) = rng.normal();
  }
  NpdqrConfig c;
  c.hidden = {16, 16};
  c.pool_size = 256;
  c.membership = 64;
  c.train.max_epochs = 40;
  c.train.patience = 10;
  c.train.learning_rate = 3e-3;
  c.seed = 1;
  const NpdqrModel m = fit_npdqr(x.topRows(2400), y.topRows(2400), 0.1, c, x.bottomRows(600), y.bottomRows(600));
  const Vector thr = m.thresholds(Vector::Constant(1, 0.5));
  CHECK(std::abs(thr.mean() - std_normal_inv_cdf(0.1)) <= 0.1);
  CHECK((thr.array() - std_normal_inv_cdf(0.1)).abs().maxCoeff() <= 0.3);

  // Determinism and serialization.
  const NpdqrModel again = fit_npdqr(x.topRows(2400), y.topRows(2400), 0.1, c, x.bottomRows(600), y.bottomRows(600));
  CHECK(again.net == m.net);
  const NpdqrModel back = NpdqrModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.thresholds(Vector::Constant(1, 0.2)) == m.thresholds(Vector::Constant(1, 0.2)));

  // Convexity at grid resolution.
  const Grid g({-3, -3}, {3, 3}, {31, 31}, GridPurpose::RegionDiscretization);
  const DiscreteRegion r = m.extract_region(Vector::Constant(1, 0.5), g);
  REQUIRE(r.size() > 2);
  for (std::size_t a = 0; a < r.size(); a += 3)
    for (std::size_t b = a + 1; b < r.size(); b += 5) {
      const Vector mid = 0.5 * (r.points.row(static_cast<Eigen::Index>(a)) + r.points.row(static_cast<Eigen::Index>(b))).transpose();
      CHECK(m.contains(Vector::Constant(1, 0.5), mid));
    }
}

TEST_CASE("fit rejects a bad level") {
  Matrix x = Matrix::Zero(20, 1), y = Matrix::Zero(20, 2);
  CHECK_THROWS(fit_npdqr(x, y, 0.7, NpdqrConfig{}, x, y));
}
