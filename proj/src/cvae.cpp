#include "mqr/cvae.hpp"

#include "mqr/errors.hpp"

#include <cmath>
#include <fstream>

namespace mqr {

std::vector<int> cvae_hidden_widths(int p) {
  if (p < 1) throw InvalidArgument("cvae_hidden_widths: feature dimension must be >= 1");
  if (p <= 5) return {32, 64, 128, 256, 128, 64, 32};
  if (p <= 8) return {64, 128, 256, 128, 64};
  if (p <= 10) return {64, 128, 256, 512, 256, 128, 64};
  if (p <= 25) return {64, 128, 256, 256, 128, 64};
  return {128, 256, 512, 512, 256, 128};
}

namespace {

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

nlohmann::json history_json(const TrainHistory& h) {
  return {{"train_loss", h.train_loss},
          {"validation_loss", h.validation_loss},
          {"best_epoch", h.best_epoch}};
}

}  // namespace

CvaeModel make_cvae(int feature_dim, int response_dim, const CvaeConfig& config) {
  if (config.latent_dim < 1) throw InvalidArgument("CVAE: latent dimension must be >= 1");
  if (!(config.kl_weight >= 0.0)) throw InvalidArgument("CVAE: kl weight must be >= 0");
  if (feature_dim < 1 || response_dim < 1) throw InvalidArgument("CVAE: empty data shape");
  const auto hidden = config.hidden.empty() ? cvae_hidden_widths(feature_dim) : config.hidden;

  auto spec = [&](int in, int out) {
    MlpSpec s;
    s.widths.push_back(in);
    s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
    s.widths.push_back(out);
    s.leaky_slope = config.leaky_slope;
    s.dropout = config.dropout;
    s.batch_norm = config.batch_norm;
    return s;
  };
  CvaeModel m;
  m.feature_dim = feature_dim;
  m.response_dim = response_dim;
  m.latent_dim = config.latent_dim;
  m.kl_weight = config.kl_weight;
  Rng enc_rng(derive_seed(config.seed, 1));
  Rng dec_rng(derive_seed(config.seed, 2));
  m.encoder = Mlp(spec(feature_dim + response_dim, 2 * config.latent_dim), enc_rng);
  m.decoder = Mlp(spec(feature_dim + config.latent_dim, response_dim), dec_rng);
  return m;
}

Vector CvaeModel::encode(const Vector& x, const Vector& y, Rng* rng, bool stochastic) const {
  if (x.size() != feature_dim || y.size() != response_dim)
    throw InvalidArgument("CvaeModel::encode: shape mismatch");
  if (stochastic && rng == nullptr) throw InvalidArgument("CvaeModel::encode: stochastic needs an rng");
  Vector in(feature_dim + response_dim);
  in << x, y;
  const Vector out = encoder.forward(in);
  Vector z = out.head(latent_dim);
  if (stochastic)
    for (int j = 0; j < latent_dim; ++j) z[j] += std::exp(0.5 * out[latent_dim + j]) * rng->normal();
  return z;
}

Vector CvaeModel::decode(const Vector& x, const Vector& z) const {
  if (x.size() != feature_dim || z.size() != latent_dim)
    throw InvalidArgument("CvaeModel::decode: shape mismatch");
  Vector in(feature_dim + latent_dim);
  in << x, z;
  return decoder.forward(in);
}

Matrix CvaeModel::encode_mean(const Matrix& x, const Matrix& y) const {
  if (x.rows() != y.rows() || x.cols() != feature_dim || y.cols() != response_dim)
    throw InvalidArgument("CvaeModel::encode_mean: shape mismatch");
  const Matrix in = stack(x.transpose(), y.transpose());
  return encoder.predict(in).topRows(latent_dim).transpose();
}

PointMatrix CvaeModel::decode_points(const Vector& x, const PointMatrix& z) const {
  if (x.size() != feature_dim || (z.rows() > 0 && z.cols() != latent_dim))
    throw InvalidArgument("CvaeModel::decode_points: shape mismatch");
  if (z.rows() == 0) return PointMatrix(0, response_dim);
  Matrix in(feature_dim + latent_dim, z.rows());
  in.topRows(feature_dim) = x.replicate(1, z.rows());
  in.bottomRows(latent_dim) = z.transpose();
  return decoder.predict(in).transpose();
}

CvaeLoss CvaeModel::loss(const Matrix& x, const Matrix& y, const Matrix& eps) const {
  if (x.rows() != y.rows() || eps.rows() != x.rows() || eps.cols() != latent_dim)
    throw InvalidArgument("CvaeModel::loss: shape mismatch");
  const Matrix enc = encoder.predict(stack(x.transpose(), y.transpose()));
  const Matrix mu = enc.topRows(latent_dim);
  const Matrix lv = enc.bottomRows(latent_dim);
  const Matrix z = mu + ((0.5 * lv.array()).exp() * eps.transpose().array()).matrix();
  const Matrix yhat = decoder.predict(stack(x.transpose(), z));
  const double n = static_cast<double>(x.rows());
  CvaeLoss out;
  out.reconstruction = (yhat - y.transpose()).squaredNorm() / n;
  out.kl = -0.5 * (1.0 + lv.array() - mu.array().square() - lv.array().exp()).sum() / n;
  out.total = out.reconstruction + kl_weight * out.kl;
  return out;
}

nlohmann::json CvaeModel::to_json() const {
  return {{"format", "mqr-cvae"},
          {"version", 1},
          {"feature_dim", feature_dim},
          {"response_dim", response_dim},
          {"latent_dim", latent_dim},
          {"kl_weight", kl_weight},
          {"history", history_json(history)},
          {"encoder", encoder.to_json()},
          {"decoder", decoder.to_json()}};
}

CvaeModel CvaeModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mqr-cvae") throw ParseError(0, 0, "not a cvae model file");
  CvaeModel m;
  m.feature_dim = j.at("feature_dim").get<int>();
  m.response_dim = j.at("response_dim").get<int>();
  m.latent_dim = j.at("latent_dim").get<int>();
  m.kl_weight = j.at("kl_weight").get<double>();
  m.encoder = Mlp::from_json(j.at("encoder"));
  m.decoder = Mlp::from_json(j.at("decoder"));
  if (j.contains("history")) {
    const auto& h = j.at("history");
    m.history.train_loss = h.at("train_loss").get<std::vector<double>>();
    m.history.validation_loss = h.at("validation_loss").get<std::vector<double>>();
    m.history.best_epoch = h.at("best_epoch").get<int>();
  }
  return m;
}

void CvaeModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump();
}

CvaeModel CvaeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

CvaeObjective::CvaeObjective(CvaeModel& model, const Matrix& x, const Matrix& y,
                             const Matrix& x_val, const Matrix& y_val, std::uint64_t val_seed)
    : model_(model), xt_(x.transpose()), yt_(y.transpose()), xv_(x_val), yv_(y_val) {
  if (x.rows() != y.rows() || x.cols() != model.feature_dim || y.cols() != model.response_dim)
    throw InvalidArgument("CvaeObjective: training data shape mismatch");
  if (x_val.rows() == 0 || x_val.rows() != y_val.rows())
    throw InvalidArgument("CvaeObjective: validation set must be nonempty and paired");
  Rng rng(val_seed);
  eps_val_.resize(x_val.rows(), model.latent_dim);
  for (Eigen::Index i = 0; i < eps_val_.rows(); ++i)
    for (Eigen::Index j = 0; j < eps_val_.cols(); ++j) eps_val_(i, j) = rng.normal();
}

void CvaeObjective::fix_noise(Matrix eps_columns, bool train_mode) {
  fixed_eps_ = std::move(eps_columns);
  train_mode_ = train_mode;
}

double CvaeObjective::batch_loss(std::span<const std::size_t> rows, Rng& rng,
                                 std::vector<MlpGrads>& grads) {
  const int r = model_.latent_dim;
  const Matrix xb = gather_columns(xt_, rows);
  const Matrix yb = gather_columns(yt_, rows);
  const auto b = static_cast<Eigen::Index>(rows.size());
  const double n = static_cast<double>(b);

  MlpTape enc_tape, dec_tape;
  const Matrix enc = model_.encoder.forward_train(stack(xb, yb), enc_tape, rng, train_mode_);
  const Matrix mu = enc.topRows(r);
  const Matrix lv = enc.bottomRows(r);

  Matrix eps(r, b);
  if (fixed_eps_) {
    eps = gather_columns(*fixed_eps_, rows);
  } else {
    for (Eigen::Index c = 0; c < b; ++c)
      for (int j = 0; j < r; ++j) eps(j, c) = rng.normal();
  }
  const Matrix sigma = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(eps);
  const Matrix yhat = model_.decoder.forward_train(stack(xb, z), dec_tape, rng, train_mode_);

  const Matrix diff = yhat - yb;
  const double rec = diff.squaredNorm() / n;
  const double kl = -0.5 * (1.0 + lv.array() - mu.array().square() - lv.array().exp()).sum() / n;
  const double lambda = model_.kl_weight;

  const Matrix grad_in = model_.decoder.backward(dec_tape, (2.0 / n) * diff, grads[1]);
  const Matrix gz = grad_in.bottomRows(r);
  Matrix genc(2 * r, b);
  genc.topRows(r) = gz + (lambda / n) * mu;
  genc.bottomRows(r) = (gz.cwiseProduct(0.5 * sigma.cwiseProduct(eps)).array() +
                        (lambda / n) * 0.5 * (lv.array().exp() - 1.0))
                           .matrix();
  model_.encoder.backward(enc_tape, genc, grads[0]);
  return rec + lambda * kl;
}

double CvaeObjective::validation_loss() { return model_.loss(xv_, yv_, eps_val_).total; }

CvaeModel fit_cvae(const Matrix& x, const Matrix& y, const CvaeConfig& config, const Matrix& x_val,
                   const Matrix& y_val) {
  if (x.rows() == 0) throw InvalidArgument("fit_cvae: empty training set");
  CvaeModel model = make_cvae(static_cast<int>(x.cols()), static_cast<int>(y.cols()), config);
  CvaeObjective objective(model, x, y, x_val, y_val, derive_seed(config.seed, 3));
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, 4);
  model.history = train(objective, tc);
  return model;
}

}  // namespace mqr
