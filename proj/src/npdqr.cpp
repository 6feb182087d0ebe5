#include "mqr/npdqr.hpp"

#include "mqr/errors.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace mqr {

namespace {

// k distinct indices from [0, n) by a partial Fisher-Yates shuffle of scratch.
void sample_distinct(std::vector<std::size_t>& scratch, std::size_t k, Rng& rng,
                     std::vector<std::size_t>& out) {
  const std::size_t n = scratch.size();
  k = std::min(k, n);
  out.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(scratch[i], scratch[j]);
    out[i] = scratch[i];
  }
}

std::vector<std::size_t> iota_vector(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Builds [x_b; u_k] columns for every (row, direction) pair and the
// matching projections u_k'y_b.
void pair_columns(const Matrix& xt, const Matrix& yt, const PointMatrix& dirs,
                  std::span<const std::size_t> rows, std::span<const std::size_t> dir_idx,
                  std::size_t dirs_per_row, Matrix& input, Matrix& target) {
  const Eigen::Index p = xt.rows();
  const Eigen::Index d = yt.rows();
  const auto cols = static_cast<Eigen::Index>(rows.size() * dirs_per_row);
  input.resize(p + d, cols);
  target.resize(1, cols);
  Eigen::Index c = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto r = static_cast<Eigen::Index>(rows[b]);
    for (std::size_t k = 0; k < dirs_per_row; ++k, ++c) {
      // dir_idx is either shared (size dirs_per_row) or per row.
      const std::size_t di = dir_idx.size() == dirs_per_row ? dir_idx[k] : dir_idx[b * dirs_per_row + k];
      const auto u = dirs.row(static_cast<Eigen::Index>(di));
      input.col(c).head(p) = xt.col(r);
      input.col(c).tail(d) = u.transpose();
      target(0, c) = u.dot(yt.col(r).transpose());
    }
  }
}

class NpdqrObjective final : public TrainObjective {
 public:
  NpdqrObjective(Mlp& net, const Matrix& x, const Matrix& y, const Matrix& x_val,
                 const Matrix& y_val, const DirectionPool& pool, double alpha,
                 std::size_t per_step, std::uint64_t val_seed)
      : net_(net),
        xt_(x.transpose()),
        yt_(y.transpose()),
        dirs_(pool.directions),
        alpha_(alpha),
        per_step_(std::min(per_step, pool.size())),
        scratch_(iota_vector(pool.size())) {
    // Fixed validation pairs: every validation row with its own directions.
    const Matrix xvt = x_val.transpose();
    const Matrix yvt = y_val.transpose();
    Rng rng(val_seed);
    std::vector<std::size_t> idx, picked;
    auto scratch = iota_vector(pool.size());
    for (Eigen::Index i = 0; i < x_val.rows(); ++i) {
      sample_distinct(scratch, per_step_, rng, picked);
      idx.insert(idx.end(), picked.begin(), picked.end());
    }
    const auto rows = iota_vector(static_cast<std::size_t>(x_val.rows()));
    pair_columns(xvt, yvt, dirs_, rows, idx, per_step_, val_input_, val_target_);
  }

  std::vector<Mlp*> networks() override { return {&net_}; }
  std::size_t train_size() const override { return static_cast<std::size_t>(xt_.cols()); }

  double batch_loss(std::span<const std::size_t> rows, Rng& rng,
                    std::vector<MlpGrads>& grads) override {
    sample_distinct(scratch_, per_step_, rng, picked_);
    pair_columns(xt_, yt_, dirs_, rows, picked_, per_step_, input_, target_);
    MlpTape tape;
    const Matrix pred = net_.forward_train(input_, tape, rng, true);
    Matrix g;
    const double loss = SupervisedObjective::loss_and_grad(
        pred, target_, LossSpec{LossKind::Pinball, alpha_}, &g);
    net_.backward(tape, g, grads[0]);
    return loss;
  }

  double validation_loss() override {
    return SupervisedObjective::loss_and_grad(net_.predict(val_input_), val_target_,
                                              LossSpec{LossKind::Pinball, alpha_}, nullptr);
  }

 private:
  Mlp& net_;
  Matrix xt_, yt_;
  const PointMatrix& dirs_;
  double alpha_;
  std::size_t per_step_;
  std::vector<std::size_t> scratch_, picked_;
  Matrix input_, target_;
  Matrix val_input_, val_target_;
};

// Tests every half-space, starting with the one that rejected the previous
// query since neighbouring grid points tend to fail on the same direction.
bool inside_halfspaces(const PointMatrix& dirs, const Vector& thr, const double* y,
                       std::size_t& last_fail) {
  const Eigen::Index m = dirs.rows();
  const int d = static_cast<int>(dirs.cols());
  auto fails = [&](Eigen::Index k) {
    const double* u = dirs.row(k).data();
    double proj = 0.0;
    for (int j = 0; j < d; ++j) proj += u[j] * y[j];
    return proj < thr[k];
  };
  const auto first = static_cast<Eigen::Index>(last_fail);
  if (first < m && fails(first)) return false;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (k == first) continue;
    if (fails(k)) {
      last_fail = static_cast<std::size_t>(k);
      return false;
    }
  }
  return true;
}

}  // namespace

nlohmann::json DirectionPool::to_json() const {
  std::vector<double> data(directions.data(), directions.data() + directions.size());
  return {{"dim", dim()}, {"count", size()}, {"seed", seed}, {"directions", data}};
}

DirectionPool DirectionPool::from_json(const nlohmann::json& j) {
  DirectionPool pool;
  const auto dim = j.at("dim").get<Eigen::Index>();
  const auto count = j.at("count").get<Eigen::Index>();
  const auto data = j.at("directions").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != dim * count)
    throw ParseError(0, 0, "direction pool payload does not match its shape");
  pool.directions = Eigen::Map<const PointMatrix>(data.data(), count, dim);
  pool.seed = j.at("seed").get<std::uint64_t>();
  return pool;
}

DirectionPool sample_direction_pool(int d, std::size_t count, std::uint64_t seed) {
  if (d < 1) throw InvalidArgument("sample_direction_pool: dimension must be >= 1");
  if (count < 1) throw InvalidArgument("sample_direction_pool: count must be >= 1");
  Rng rng(seed);
  DirectionPool pool;
  pool.seed = seed;
  pool.directions.resize(static_cast<Eigen::Index>(count), d);
  for (Eigen::Index i = 0; i < pool.directions.rows(); ++i) {
    double norm = 0.0;
    do {
      for (int j = 0; j < d; ++j) pool.directions(i, j) = rng.normal();
      norm = pool.directions.row(i).norm();
    } while (norm < 1e-12);
    pool.directions.row(i) /= norm;
  }
  return pool;
}

double NpdqrModel::threshold(const Vector& x, const Vector& u) const {
  if (x.size() != feature_dim || u.size() != response_dim())
    throw InvalidArgument("NpdqrModel::threshold: shape mismatch");
  Vector in(feature_dim + response_dim());
  in << x, u;
  return net.forward(in)[0];
}

Vector NpdqrModel::thresholds(const Vector& x) const {
  if (x.size() != feature_dim)
    throw InvalidArgument("NpdqrModel: feature length " + std::to_string(x.size()) + " != " +
                          std::to_string(feature_dim));
  const Eigen::Index m = membership.rows();
  Matrix in(feature_dim + response_dim(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    in.col(k).head(feature_dim) = x;
    in.col(k).tail(response_dim()) = membership.row(k).transpose();
  }
  return net.predict(in).row(0).transpose();
}

bool NpdqrModel::contains_with(const Vector& thr, const double* y) const {
  std::size_t last = 0;
  return inside_halfspaces(membership, thr, y, last);
}

bool NpdqrModel::contains(const Vector& x, const Vector& y) const {
  if (y.size() != response_dim())
    throw InvalidArgument("NpdqrModel::contains: response length mismatch");
  return contains_with(thresholds(x), y.data());
}

DiscreteRegion NpdqrModel::extract_region(const Vector& x, const Grid& grid, Space space) const {
  if (grid.dim() != response_dim())
    throw InvalidArgument("NpdqrModel::extract_region: grid dimension mismatch");
  const Vector thr = thresholds(x);
  const int d = grid.dim();
  std::vector<double> p(static_cast<std::size_t>(d));
  std::vector<double> kept;
  std::size_t last = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    if (inside_halfspaces(membership, thr, p.data(), last)) kept.insert(kept.end(), p.begin(), p.end());
  }
  DiscreteRegion region;
  region.space = space;
  region.source_x = x;
  region.points = Eigen::Map<const PointMatrix>(kept.data(),
                                                static_cast<Eigen::Index>(kept.size()) / d, d);
  return region;
}

nlohmann::json NpdqrModel::to_json() const {
  return {{"format", "mqr-npdqr"},
          {"version", 1},
          {"alpha", alpha},
          {"feature_dim", feature_dim},
          {"per_step", per_step},
          {"membership_index", membership_index},
          {"pool", pool.to_json()},
          {"net", net.to_json()}};
}

NpdqrModel NpdqrModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mqr-npdqr") throw ParseError(0, 0, "not an npdqr model file");
  NpdqrModel m;
  m.alpha = j.at("alpha").get<double>();
  m.feature_dim = j.at("feature_dim").get<int>();
  m.per_step = j.at("per_step").get<std::size_t>();
  m.membership_index = j.at("membership_index").get<std::vector<std::size_t>>();
  m.pool = DirectionPool::from_json(j.at("pool"));
  m.net = Mlp::from_json(j.at("net"));
  m.membership.resize(static_cast<Eigen::Index>(m.membership_index.size()), m.pool.dim());
  for (std::size_t k = 0; k < m.membership_index.size(); ++k) {
    if (m.membership_index[k] >= m.pool.size())
      throw ParseError(0, 0, "membership index outside the direction pool");
    m.membership.row(static_cast<Eigen::Index>(k)) =
        m.pool.directions.row(static_cast<Eigen::Index>(m.membership_index[k]));
  }
  return m;
}

void NpdqrModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump();
}

NpdqrModel NpdqrModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

NpdqrModel fit_npdqr(const Matrix& x, const Matrix& y, double alpha, const NpdqrConfig& config,
                     const Matrix& x_val, const Matrix& y_val) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("fit_npdqr: alpha must lie in (0, 0.5)");
  if (x.rows() == 0 || x.rows() != y.rows())
    throw InvalidArgument("fit_npdqr: training rows must be nonempty and paired");
  if (x_val.rows() == 0 || x_val.rows() != y_val.rows() || x_val.cols() != x.cols() ||
      y_val.cols() != y.cols())
    throw InvalidArgument("fit_npdqr: validation set must be nonempty and shaped like the training set");
  if (config.per_step < 1 || config.membership < 1)
    throw InvalidArgument("fit_npdqr: direction counts must be positive");

  const int p = static_cast<int>(x.cols());
  const int d = static_cast<int>(y.cols());
  NpdqrModel model;
  model.alpha = alpha;
  model.feature_dim = p;
  model.per_step = config.per_step;
  model.pool = sample_direction_pool(d, config.pool_size, derive_seed(config.seed, 1));

  Rng member_rng(derive_seed(config.seed, 2));
  auto scratch = iota_vector(model.pool.size());
  sample_distinct(scratch, config.membership, member_rng, model.membership_index);
  model.membership.resize(static_cast<Eigen::Index>(model.membership_index.size()), d);
  for (std::size_t k = 0; k < model.membership_index.size(); ++k)
    model.membership.row(static_cast<Eigen::Index>(k)) =
        model.pool.directions.row(static_cast<Eigen::Index>(model.membership_index[k]));

  MlpSpec spec;
  spec.widths.push_back(p + d);
  spec.widths.insert(spec.widths.end(), config.hidden.begin(), config.hidden.end());
  spec.widths.push_back(1);
  spec.leaky_slope = config.leaky_slope;
  spec.dropout = config.dropout;
  spec.batch_norm = config.batch_norm;
  Rng init(derive_seed(config.seed, 3));
  model.net = Mlp(spec, init);

  NpdqrObjective objective(model.net, x, y, x_val, y_val, model.pool, alpha, config.per_step,
                           derive_seed(config.seed, 4));
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, 5);
  model.history = train(objective, tc);
  return model;
}

}  // namespace mqr
