#include "mqr/errors.hpp"
#include "mqr/regions.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mqr;

namespace {

Matrix gaussian_rows(Eigen::Index n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double brute(const double* q, const PointMatrix& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) s += (pts(i, j) - q[j]) * (pts(i, j) - q[j]);
    best = std::min(best, s);
  }
  return std::sqrt(best);
}

}  // namespace

TEST_CASE("grid cell totals") {
  const int totals[3][2] = {{3025, 10000}, {103823, 42875}, {234256, 104976}};
  for (int d = 2; d <= 4; ++d) {
    const Matrix y = gaussian_rows(200, d, d);
    CHECK(build_grid(y, GridPurpose::AreaMeasurement).size() == static_cast<std::size_t>(totals[d - 2][0]));
    CHECK(build_grid(y, GridPurpose::RegionDiscretization).size() == static_cast<std::size_t>(totals[d - 2][1]));
  }
  CHECK(build_grid(gaussian_rows(50, 1, 1), GridPurpose::AreaMeasurement).size() == 55);
  CHECK_THROWS_AS(build_grid(gaussian_rows(50, 5, 1), GridPurpose::AreaMeasurement), UnsupportedDimension);
  CHECK_THROWS(build_grid(gaussian_rows(1, 2, 1), GridPurpose::AreaMeasurement));
}

TEST_CASE("grid bounds come from widened 1% and 99% quantiles") {
  Matrix y(101, 2);
  for (int i = 0; i <= 100; ++i) {
    y(i, 0) = i;
    y(i, 1) = -i;
  }
  const Grid area = build_grid(y, GridPurpose::AreaMeasurement);
  const Grid reg = build_grid(y, GridPurpose::RegionDiscretization);
  CHECK(area.low()[0] == doctest::Approx(1.0 - 0.2));
  CHECK(area.high()[0] == doctest::Approx(99.0 + 0.2));
  CHECK(reg.low()[1] == doctest::Approx(-99.0 - 1.0));
  CHECK(reg.high()[1] == doctest::Approx(-1.0 + 1.0));
  CHECK(build_grid(y, GridPurpose::AreaMeasurement) == area);
  const PointMatrix pts = area.points();
  CHECK(static_cast<std::size_t>(pts.rows()) == area.size());
  double p[2];
  area.point(57, p);
  CHECK(p[0] == pts(57, 0));
  CHECK(p[1] == pts(57, 1));
  // Cell centres.
  CHECK(pts(0, 0) == doctest::Approx(area.low()[0] + 0.5 * area.step(0)));
  CHECK(Grid::from_json(area.to_json()) == area);
}

TEST_CASE("area counts grid points") {
  const Grid g({-2.0, -2.0}, {2.0, 2.0}, {55, 55}, GridPurpose::AreaMeasurement);
  CHECK(area([](std::span<const double>) { return false; }, g) == 0);
  CHECK(area([](std::span<const double>) { return true; }, g) == 3025);
  const double rho = 1.3;
  const auto disc = area([&](std::span<const double> y) { return y[0] * y[0] + y[1] * y[1] <= rho * rho; }, g);
  const double expected = std::numbers::pi * rho * rho / g.cell_volume();
  const double perimeter_cells = 2 * std::numbers::pi * rho / g.step(0);
  CHECK(std::abs(static_cast<double>(disc) - expected) <= 4 * perimeter_cells);
  const auto smaller = area([&](std::span<const double> y) { return y[0] * y[0] + y[1] * y[1] <= 1.0; }, g);
  CHECK(smaller <= disc);
}

TEST_CASE("nearest neighbour queries") {
  PointMatrix one(1, 2);
  one << 0, 0;
  const std::vector<double> q{3.0, 4.0};
  CHECK(min_distance(q, one) == doctest::Approx(5.0));
  CHECK_THROWS_AS(min_distance(q, PointMatrix(0, 2)), EmptyCarrier);

  const PointMatrix carrier = gaussian_rows(1000, 3, 5);
  const PointMatrix queries = gaussian_rows(1000, 3, 6) * 1.5;
  const KdTree tree(carrier);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const std::vector<double> y(queries.row(i).data(), queries.row(i).data() + 3);
    const double b = brute(y.data(), carrier);
    REQUIRE(min_distance(y, carrier) == b);
    REQUIRE(tree.nearest(y.data()) == b);
    CHECK(tree.any_within(y.data(), b) == true);
    CHECK(tree.any_within(y.data(), b * 0.999) == (b == 0.0));
  }
  const std::vector<double> self(carrier.row(10).data(), carrier.row(10).data() + 3);
  CHECK(min_distance(self, carrier) == 0.0);

  // 1-Lipschitz.
  for (Eigen::Index i = 0; i + 1 < 200; ++i) {
    const double a = tree.nearest(queries.row(i).data()), b = tree.nearest(queries.row(i + 1).data());
    CHECK(std::abs(a - b) <= (queries.row(i) - queries.row(i + 1)).norm() + 1e-12);
  }
}
