#include "mqr/nn.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mqr;

namespace {

Mlp small_net(std::vector<int> widths, std::uint64_t seed, double dropout = 0.0) {
  MlpSpec spec;
  spec.widths = std::move(widths);
  spec.dropout = dropout;
  Rng rng(seed);
  return Mlp(spec, rng);
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("forward pass basics") {
  Mlp net = small_net({3, 5, 2}, 3);
  Vector v(3);
  v << 0.3, -1.0, 2.0;
  CHECK(net.forward(v) == net.forward(v));
  CHECK(net.predict(v).col(0).isApprox(net.forward(v), 1e-14));

  for (auto* p : net.parameters()) p->setZero();
  CHECK(net.forward(v).isZero());

  Mlp lin = small_net({2, 2}, 1);
  lin.layers()[0].weight = Matrix::Identity(2, 2);
  lin.layers()[0].bias.setZero();
  Vector w(2);
  w << 1.5, -4.0;
  CHECK(lin.forward(w) == w);
}

TEST_CASE("pinball loss and gradient") {
  CHECK(pinball_loss(1, 0, 0.9) == doctest::Approx(0.9));
  CHECK(pinball_loss(0, 1, 0.9) == doctest::Approx(0.1));
  CHECK(pinball_loss(2.5, 2.5, 0.3) == 0.0);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double y = rng.normal(), yh = rng.normal(), a = rng.uniform();
    CHECK(pinball_loss(y, yh, a) > 0.0);
  }
  CHECK(pinball_grad(1.0, 0.0, 0.9) == doctest::Approx(-0.9));
  CHECK(pinball_grad(0.0, 1.0, 0.9) == doctest::Approx(0.1));
  CHECK(pinball_grad(1.0, 1.0, 0.9) == doctest::Approx(0.1));
}

TEST_CASE("gaussian kl") {
  std::vector<double> z{0.0}, mu{1.0, 0.0}, lv0{0.0, 0.0}, lv{std::log(4.0)};
  CHECK(gaussian_kl(z, z) == 0.0);
  CHECK(gaussian_kl(mu, lv0) == doctest::Approx(0.5));
  // KL(N(0,4) || N(0,1)) by quadrature of p log(p/q).
  const double kl_num = [] {
    const int n = 200000;
    const double a = -20, b = 20, h = (b - a) / n;
    double s = 0;
    for (int i = 0; i <= n; ++i) {
      const double x = a + i * h;
      const double p = std::exp(-x * x / 8.0) / std::sqrt(8.0 * std::numbers::pi);
      const double q = std::exp(-x * x / 2.0) / std::sqrt(2.0 * std::numbers::pi);
      s += (i == 0 || i == n ? 0.5 : 1.0) * p * std::log(p / q);
    }
    return s * h;
  }();
  CHECK(gaussian_kl(z, lv) == doctest::Approx(kl_num).epsilon(1e-6));
  CHECK(gaussian_kl(z, lv) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(9);
  const Matrix x = random_matrix(20, 3, rng);
  const Matrix y = random_matrix(20, 2, rng);
  std::vector<std::size_t> rows(20);
  std::iota(rows.begin(), rows.end(), 0);
  SUBCASE("mse") {
    Mlp net = small_net({3, 8, 6, 2}, 4);
    SupervisedObjective obj(net, x, y, {LossKind::Mse, 0.5}, x, y);
    CHECK(oracle::gradient_check(obj, rows, 100, 1) <= 1e-4);
  }
  SUBCASE("pinball") {
    Mlp net = small_net({3, 8, 6, 2}, 5);
    SupervisedObjective obj(net, x, y, {LossKind::Pinball, 0.2}, x, y);
    CHECK(oracle::gradient_check(obj, rows, 100, 2) <= 1e-4);
  }
  SUBCASE("dropout with a fixed mask stream") {
    Mlp net = small_net({3, 8, 2}, 6, 0.3);
    SupervisedObjective obj(net, x, y, {LossKind::Mse, 0.5}, x, y);
    CHECK(oracle::gradient_check(obj, rows, 100, 3) <= 1e-4);
  }
  SUBCASE("batch norm") {
    MlpSpec spec;
    spec.widths = {3, 6, 2};
    spec.batch_norm = true;
    Rng init(8);
    Mlp net(spec, init);
    SupervisedObjective obj(net, x, y, {LossKind::Mse, 0.5}, x, y);
    CHECK(oracle::gradient_check(obj, rows, 100, 4) <= 1e-4);
  }
}

TEST_CASE("linear regression reaches the closed form") {
  Rng rng(1);
  Matrix x(400, 1), y(400, 1);
  for (int i = 0; i < 400; ++i) {
    x(i, 0) = rng.uniform(-1, 1);
    y(i, 0) = 2.0 * x(i, 0);
  }
  Mlp net = small_net({1, 1}, 2);
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.batch_size = 32;
  tc.max_epochs = 300;
  tc.patience = 300;
  const auto h = fit_supervised(net, x.topRows(300), y.topRows(300), {LossKind::Mse, 0.5}, tc, x.bottomRows(100),
                                y.bottomRows(100));
  CHECK(h.best_validation_loss <= 1e-4);
  // Early stopping returns the best snapshot.
  for (double v : h.validation_loss) CHECK(h.best_validation_loss <= v);
  SupervisedObjective check(net, x, y, {LossKind::Mse, 0.5}, x.bottomRows(100), y.bottomRows(100));
  CHECK(check.validation_loss() == doctest::Approx(h.best_validation_loss));
}

TEST_CASE("constant model recovers the pinball quantile") {
  Rng rng(3);
  Matrix x = Matrix::Zero(1001, 1), y(1001, 1);
  for (int i = 0; i < 1001; ++i) y(i, 0) = rng.normal();
  std::vector<double> sorted(y.data(), y.data() + 1001);
  std::sort(sorted.begin(), sorted.end());
  Mlp net = small_net({1, 1}, 0);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 1001;
  tc.max_epochs = 3000;
  tc.patience = 3000;
  fit_supervised(net, x, y, {LossKind::Pinball, 0.75}, tc, x, y);
  const double c = net.forward(Vector::Zero(1))[0];
  const auto k = static_cast<std::size_t>(std::ceil(0.75 * 1001));
  CHECK(c >= sorted[k - 2]);
  CHECK(c <= sorted[k]);
}

TEST_CASE("training loop bookkeeping") {
  Rng rng(4);
  const Matrix x = random_matrix(50, 2, rng), y = random_matrix(50, 1, rng);
  TrainConfig tc;
  tc.patience = 0;
  tc.max_epochs = 50;
  Mlp net = small_net({2, 4, 1}, 1);
  CHECK(fit_supervised(net, x, y, {}, tc, x, y).epochs_run() == 1);

  tc.patience = 5;
  tc.seed = 77;
  Mlp a = small_net({2, 4, 1}, 1), b = small_net({2, 4, 1}, 1);
  fit_supervised(a, x, y, {}, tc, x, y);
  fit_supervised(b, x, y, {}, tc, x, y);
  CHECK(a == b);

  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("serialization round trip") {
  MlpSpec spec;
  spec.widths = {3, 4, 2};
  spec.batch_norm = true;
  spec.dropout = 0.1;
  Rng rng(12);
  Mlp net(spec, rng);
  const Mlp back = Mlp::from_json(nlohmann::json::parse(net.to_json().dump()));
  CHECK(back == net);
  Vector v = Vector::Ones(3);
  CHECK(back.forward(v) == net.forward(v));
}
