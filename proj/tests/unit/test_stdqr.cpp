#include "mqr/stdqr.hpp"

#include <doctest.h>

#include <filesystem>

using namespace mqr;

namespace {

StdqrConfig tiny_config(int latent) {
  StdqrConfig c;
  c.cvae.latent_dim = latent;
  c.cvae.hidden = {16, 16};
  c.cvae.dropout = 0.0;
  c.cvae.train.max_epochs = 15;
  c.cvae.train.patience = 5;
  c.cvae.train.batch_size = 128;
  c.npdqr.hidden = {16};
  c.npdqr.pool_size = 128;
  c.npdqr.membership = 64;
  c.npdqr.train.max_epochs = 10;
  c.npdqr.train.patience = 5;
  c.directional_level = 0.9;
  c.cvae.seed = 1;
  c.npdqr.seed = 2;
  return c;
}

void data(Matrix& x, Matrix& y, int n, int d) {
  Rng rng(6);
  x.resize(n, 1);
  y.resize(n, d);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-1, 1);
    for (int j = 0; j < d; ++j) y(i, j) = x(i, 0) * (j + 1) + 0.3 * rng.normal();
  }
}

}  // namespace

TEST_CASE("decoded regions are the pointwise decode of the latent region") {
  Matrix x, y;
  data(x, y, 600, 2);
  const StdqrModel m = fit_stdqr(x.topRows(500), y.topRows(500), x.bottomRows(100), y.bottomRows(100), tiny_config(2));
  CHECK(m.latent_grid.size() == 10000);
  const Vector xq = Vector::Constant(1, 0.2);
  const DiscreteRegion zr = m.latent_region(xq);
  const DiscreteRegion yr = m.region(xq);
  CHECK(zr.size() == yr.size());
  CHECK(zr.space == Space::Latent);
  CHECK(yr.space == Space::Response);
  for (std::size_t i = 0; i < zr.size(); i += 17) {
    const auto r = static_cast<Eigen::Index>(i);
    CHECK(yr.points.row(r).transpose() == m.cvae.decode(xq, zr.points.row(r).transpose()));
  }

  const auto dir = std::filesystem::temp_directory_path() / "mqr_stdqr_bundle_test";
  std::filesystem::remove_all(dir);
  m.save_bundle(dir.string());
  const StdqrModel back = StdqrModel::load_bundle(dir.string());
  CHECK(back.region(xq).points == yr.points);
  std::filesystem::remove_all(dir);

  const StdqrModel again =
      fit_stdqr(x.topRows(500), y.topRows(500), x.bottomRows(100), y.bottomRows(100), tiny_config(2));
  CHECK(again.cvae.to_json() == m.cvae.to_json());
  CHECK(again.latent.to_json() == m.latent.to_json());
}

TEST_CASE("one-dimensional latent regions are intervals") {
  Matrix x, y;
  data(x, y, 600, 2);
  StdqrConfig c = tiny_config(1);
  c.npdqr.train.max_epochs = 60;
  c.npdqr.train.patience = 60;
  c.npdqr.train.learning_rate = 3e-3;
  const StdqrModel m = fit_stdqr(x.topRows(500), y.topRows(500), x.bottomRows(100), y.bottomRows(100), c);
  const DiscreteRegion zr = m.latent_region(Vector::Constant(1, 0.0));
  REQUIRE(zr.size() >= 2);
  const double step = m.latent_grid.step(0);
  std::vector<double> v(zr.points.data(), zr.points.data() + zr.points.rows());
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] - v[i - 1] == doctest::Approx(step));
}

TEST_CASE("four responses use a three-dimensional latent grid") {
  Matrix x, y;
  data(x, y, 400, 4);
  StdqrConfig c = tiny_config(3);
  c.npdqr.train.max_epochs = 2;
  c.cvae.train.max_epochs = 2;
  const StdqrModel m = fit_stdqr(x.topRows(300), y.topRows(300), x.bottomRows(100), y.bottomRows(100), c);
  CHECK(m.latent_grid.dim() == 3);
  CHECK(m.latent_grid.size() == 42875);
  const DiscreteRegion r = m.region(Vector::Constant(1, 0.1));
  CHECK((r.points.rows() == 0 || r.points.cols() == 4));
}
