#include "mqr/nn.hpp"

#include "mqr/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mqr {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ParseError(0, 0, "matrix payload length does not match its shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[k++].get<double>();
  return m;
}

}  // namespace

void MlpGrads::set_zero() {
  for (auto& t : tensors) t.setZero();
}

Mlp::Mlp(MlpSpec spec, Rng& init_rng) : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
  for (int w : spec_.widths)
    if (w < 1) throw InvalidArgument("Mlp: layer widths must be positive");
  if (!(spec_.dropout >= 0.0 && spec_.dropout < 1.0))
    throw InvalidArgument("Mlp: dropout must lie in [0,1)");

  const std::size_t n_layers = spec_.widths.size() - 1;
  layers_.resize(n_layers);
  const double gain = 1.0 + spec_.leaky_slope * spec_.leaky_slope;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int fan_in = spec_.widths[l];
    const int fan_out = spec_.widths[l + 1];
    const double bound = std::sqrt(6.0 / (gain * fan_in));
    auto& layer = layers_[l];
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = init_rng.uniform(-bound, bound);
    layer.bias = Matrix::Zero(fan_out, 1);
    if (spec_.batch_norm && l + 1 < n_layers) {
      layer.bn_scale = Matrix::Ones(fan_out, 1);
      layer.bn_shift = Matrix::Zero(fan_out, 1);
      layer.running_mean = Vector::Zero(fan_out);
      layer.running_var = Vector::Ones(fan_out);
    }
  }
}

Vector Mlp::forward(const Vector& input, bool train_mode, Rng* rng) const {
  if (input.size() != input_width())
    throw InvalidArgument("Mlp::forward: input length " + std::to_string(input.size()) +
                          " != " + std::to_string(input_width()));
  if (train_mode && spec_.dropout > 0.0 && rng == nullptr)
    throw InvalidArgument("Mlp::forward: train mode with dropout needs an rng");

  Vector a = input;
  const std::size_t n_layers = layers_.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = layers_[l];
    Vector z = layer.weight * a + layer.bias.col(0);
    if (l + 1 == n_layers) return z;
    if (layer.bn_scale.size() > 0) {
      z = ((z - layer.running_mean).array() / (layer.running_var.array() + kBnEps).sqrt() *
               layer.bn_scale.col(0).array() +
           layer.bn_shift.col(0).array())
              .matrix();
    }
    for (Eigen::Index i = 0; i < z.size(); ++i)
      if (z[i] < 0.0) z[i] *= spec_.leaky_slope;
    if (train_mode && spec_.dropout > 0.0) {
      const double keep = 1.0 - spec_.dropout;
      for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = rng->uniform() < spec_.dropout ? 0.0 : z[i] / keep;
    }
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::predict(const Matrix& inputs) const {
  if (inputs.rows() != input_width())
    throw InvalidArgument("Mlp::predict: input rows " + std::to_string(inputs.rows()) +
                          " != " + std::to_string(input_width()));
  Matrix a = inputs;
  const std::size_t n_layers = layers_.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = layers_[l];
    Matrix z = layer.weight * a;
    z.colwise() += layer.bias.col(0);
    if (l + 1 == n_layers) return z;
    if (layer.bn_scale.size() > 0) {
      const Vector scale = layer.bn_scale.col(0).array() /
                           (layer.running_var.array() + kBnEps).sqrt();
      const Vector shift =
          layer.bn_shift.col(0).array() - layer.running_mean.array() * scale.array();
      z = (z.array().colwise() * scale.array()).colwise() + shift.array();
    }
    const double s = spec_.leaky_slope;
    a = z.unaryExpr([s](double v) { return v < 0.0 ? s * v : v; });
  }
  return a;
}

Matrix Mlp::forward_train(const Matrix& inputs, MlpTape& tape, Rng& rng, bool train_mode) {
  if (inputs.rows() != input_width())
    throw InvalidArgument("Mlp::forward_train: input rows " + std::to_string(inputs.rows()) +
                          " != " + std::to_string(input_width()));
  const std::size_t n_layers = layers_.size();
  tape.inputs.resize(n_layers);
  tape.normalized.resize(n_layers);
  tape.inv_std.resize(n_layers);
  tape.pre.resize(n_layers);
  tape.masks.resize(n_layers);

  const double s = spec_.leaky_slope;
  const double batch = static_cast<double>(inputs.cols());
  tape.batch_stats = train_mode;
  Matrix a = inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto& layer = layers_[l];
    tape.inputs[l] = std::move(a);
    Matrix z = layer.weight * tape.inputs[l];
    z.colwise() += layer.bias.col(0);
    if (l + 1 == n_layers) return z;

    if (layer.bn_scale.size() > 0) {
      if (train_mode) {
        const Vector mean = z.rowwise().mean();
        z.colwise() -= mean;
        const Vector var = z.array().square().rowwise().mean();
        const Vector inv_std = (var.array() + kBnEps).rsqrt();
        tape.normalized[l] = z.array().colwise() * inv_std.array();
        tape.inv_std[l] = inv_std;
        layer.running_mean = (1.0 - kBnMomentum) * layer.running_mean + kBnMomentum * mean;
        const double unbias = batch > 1.0 ? batch / (batch - 1.0) : 1.0;
        layer.running_var =
            (1.0 - kBnMomentum) * layer.running_var + kBnMomentum * unbias * var;
      } else {
        const Vector inv_std = (layer.running_var.array() + kBnEps).rsqrt();
        z.colwise() -= layer.running_mean;
        tape.normalized[l] = z.array().colwise() * inv_std.array();
        tape.inv_std[l] = inv_std;
      }
      z = (tape.normalized[l].array().colwise() * layer.bn_scale.col(0).array()).colwise() +
          layer.bn_shift.col(0).array();
    }
    tape.pre[l] = z;
    Matrix h = z.unaryExpr([s](double v) { return v < 0.0 ? s * v : v; });
    if (train_mode && spec_.dropout > 0.0) {
      const double keep = 1.0 - spec_.dropout;
      Matrix mask(h.rows(), h.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          mask(i, j) = rng.uniform() < spec_.dropout ? 0.0 : 1.0 / keep;
      h.array() *= mask.array();
      tape.masks[l] = std::move(mask);
    } else {
      tape.masks[l].resize(0, 0);
    }
    a = std::move(h);
  }
  return a;
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& grad_output, MlpGrads& grads) const {
  const std::size_t n_layers = layers_.size();
  const double s = spec_.leaky_slope;
  const double batch = static_cast<double>(grad_output.cols());

  // Tensor offsets per layer in grads.tensors.
  std::vector<std::size_t> offset(n_layers);
  std::size_t k = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offset[l] = k;
    k += layers_[l].bn_scale.size() > 0 ? 4 : 2;
  }

  Matrix delta = grad_output;
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = layers_[l];
    if (l + 1 < n_layers) {
      // delta currently holds d/d(layer output after dropout).
      if (tape.masks[l].size() > 0) delta.array() *= tape.masks[l].array();
      delta = delta.binaryExpr(tape.pre[l],
                               [s](double g, double z) { return z < 0.0 ? s * g : g; });
      if (layer.bn_scale.size() > 0) {
        const Matrix& xhat = tape.normalized[l];
        grads.tensors[offset[l] + 2] += (delta.array() * xhat.array()).rowwise().sum().matrix();
        grads.tensors[offset[l] + 3] += delta.rowwise().sum();
        Matrix dxhat = delta.array().colwise() * layer.bn_scale.col(0).array();
        if (!tape.batch_stats) {
          delta = (dxhat.array().colwise() * tape.inv_std[l].array()).matrix();
          grads.tensors[offset[l]].noalias() += delta * tape.inputs[l].transpose();
          grads.tensors[offset[l] + 1] += delta.rowwise().sum();
          delta = layer.weight.transpose() * delta;
          continue;
        }
        const Vector sum_dxhat = dxhat.rowwise().sum();
        const Vector sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
        Matrix dz = (batch * dxhat).colwise() - sum_dxhat;
        dz -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
        delta = (dz.array().colwise() * (tape.inv_std[l].array() / batch)).matrix();
      }
    }
    grads.tensors[offset[l]].noalias() += delta * tape.inputs[l].transpose();
    grads.tensors[offset[l] + 1] += delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

MlpGrads Mlp::make_grads() const {
  MlpGrads g;
  for (const Matrix* p : parameters()) g.tensors.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

std::vector<Matrix*> Mlp::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.bn_scale.size() > 0) {
      out.push_back(&layer.bn_scale);
      out.push_back(&layer.bn_shift);
    }
  }
  return out;
}

std::vector<const Matrix*> Mlp::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.bn_scale.size() > 0) {
      out.push_back(&layer.bn_scale);
      out.push_back(&layer.bn_shift);
    }
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

bool Mlp::all_finite() const {
  for (const Matrix* p : parameters())
    if (!p->allFinite()) return false;
  return true;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) {
    nlohmann::json jl = {{"weight", matrix_to_json(layer.weight)},
                         {"bias", matrix_to_json(layer.bias)}};
    if (layer.bn_scale.size() > 0) {
      jl["bn_scale"] = matrix_to_json(layer.bn_scale);
      jl["bn_shift"] = matrix_to_json(layer.bn_shift);
      jl["running_mean"] = matrix_to_json(layer.running_mean);
      jl["running_var"] = matrix_to_json(layer.running_var);
    }
    layers.push_back(std::move(jl));
  }
  return {{"format", "mqr-mlp"},
          {"version", 1},
          {"widths", spec_.widths},
          {"leaky_slope", spec_.leaky_slope},
          {"dropout", spec_.dropout},
          {"batch_norm", spec_.batch_norm},
          {"layers", std::move(layers)}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mqr-mlp") throw ParseError(0, 0, "not an mqr-mlp document");
  Mlp m;
  m.spec_.widths = j.at("widths").get<std::vector<int>>();
  m.spec_.leaky_slope = j.at("leaky_slope").get<double>();
  m.spec_.dropout = j.at("dropout").get<double>();
  m.spec_.batch_norm = j.at("batch_norm").get<bool>();
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != m.spec_.widths.size())
    throw ParseError(0, 0, "layer count does not match widths");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& jl = layers[l];
    DenseLayer layer;
    layer.weight = matrix_from_json(jl.at("weight"));
    layer.bias = matrix_from_json(jl.at("bias"));
    if (layer.weight.rows() != m.spec_.widths[l + 1] || layer.weight.cols() != m.spec_.widths[l] ||
        layer.bias.rows() != layer.weight.rows())
      throw ParseError(0, 0, "layer " + std::to_string(l) + " has an inconsistent shape");
    if (jl.contains("bn_scale")) {
      layer.bn_scale = matrix_from_json(jl.at("bn_scale"));
      layer.bn_shift = matrix_from_json(jl.at("bn_shift"));
      layer.running_mean = matrix_from_json(jl.at("running_mean")).col(0);
      layer.running_var = matrix_from_json(jl.at("running_var")).col(0);
    }
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

void Mlp::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump();
}

Mlp Mlp::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.spec_.widths != b.spec_.widths || a.spec_.leaky_slope != b.spec_.leaky_slope ||
      a.spec_.dropout != b.spec_.dropout || a.spec_.batch_norm != b.spec_.batch_norm)
    return false;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols() || *pa[i] != *pb[i])
      return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l)
    if (a.layers_[l].running_mean != b.layers_[l].running_mean ||
        a.layers_[l].running_var != b.layers_[l].running_var)
      return false;
  return true;
}

double pinball_loss(double y, double yhat, double alpha) {
  const double r = y - yhat;
  return r > 0.0 ? alpha * r : (1.0 - alpha) * (-r);
}

double pinball_grad(double y, double yhat, double alpha) {
  return y - yhat > 0.0 ? -alpha : (1.0 - alpha);
}

double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size())
    throw InvalidArgument("gaussian_kl: mu and logvar lengths differ");
  double s = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j)
    s += 1.0 + logvar[j] - mu[j] * mu[j] - std::exp(logvar[j]);
  return -0.5 * s;
}

Adam::Adam(const Mlp& model, AdamConfig config) : config_(config) {
  for (const Matrix* p : model.parameters()) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(Mlp& model, const MlpGrads& grads) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step = config_.learning_rate / c1;
  const double eps = config_.epsilon;
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads.tensors[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    params[i]->array() -= step * m_[i].array() / ((v_[i].array() / c2).sqrt() + eps);
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be positive");
  if (max_epochs < 1) throw InvalidArgument("TrainConfig: max_epochs must be positive");
  if (patience < 0)
    throw InvalidArgument("TrainConfig: patience must be >= 0");
}

TrainHistory train(TrainObjective& objective, const TrainConfig& config) {
  config.validate();
  const std::size_t n = objective.train_size();
  if (n == 0) throw InvalidArgument("train: empty training set");

  auto nets = objective.networks();
  std::vector<Adam> optimizers;
  std::vector<MlpGrads> grads;
  std::vector<Mlp> best;
  for (Mlp* net : nets) {
    optimizers.emplace_back(*net, AdamConfig{.learning_rate = config.learning_rate});
    grads.push_back(net->make_grads());
    best.push_back(*net);
  }

  Rng rng(config.seed);
  TrainHistory history;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      for (auto& g : grads) g.set_zero();
      const double loss = objective.batch_loss(rows, rng, grads);
      if (!std::isfinite(loss))
        throw TrainingDiverged(epoch + 1, "training diverged: non-finite loss at epoch " +
                                              std::to_string(epoch + 1));
      for (std::size_t k = 0; k < nets.size(); ++k) optimizers[k].step(*nets[k], grads[k]);
      total += loss * static_cast<double>(len);
    }
    for (Mlp* net : nets)
      if (!net->all_finite())
        throw TrainingDiverged(epoch + 1, "training diverged: non-finite parameters at epoch " +
                                              std::to_string(epoch + 1));
    const double val = objective.validation_loss();
    if (!std::isfinite(val))
      throw TrainingDiverged(epoch + 1, "training diverged: non-finite validation loss at epoch " +
                                            std::to_string(epoch + 1));
    history.train_loss.push_back(total / static_cast<double>(n));
    history.validation_loss.push_back(val);
    if (val < best_loss) {
      best_loss = val;
      history.best_epoch = epoch;
      for (std::size_t k = 0; k < nets.size(); ++k) best[k] = *nets[k];
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (since_improvement >= config.patience) break;
  }
  for (std::size_t k = 0; k < nets.size(); ++k) *nets[k] = best[k];
  history.best_validation_loss = best_loss;
  return history;
}

Matrix gather_columns(const Matrix& samples, std::span<const std::size_t> cols) {
  Matrix out(samples.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = samples.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

SupervisedObjective::SupervisedObjective(Mlp& model, const Matrix& x, const Matrix& y,
                                         LossSpec loss, const Matrix& x_val, const Matrix& y_val)
    : model_(model),
      x_(x.transpose()),
      y_(y.transpose()),
      loss_(loss),
      x_val_(x_val.transpose()),
      y_val_(y_val.transpose()) {
  if (x.rows() != y.rows() || x_val.rows() != y_val.rows())
    throw InvalidArgument("SupervisedObjective: row counts of inputs and targets differ");
  if (x.cols() != model.input_width() || y.cols() != model.output_width())
    throw InvalidArgument("SupervisedObjective: data shape does not match the network");
  if (x_val.rows() == 0) throw InvalidArgument("SupervisedObjective: empty validation set");
}

double SupervisedObjective::loss_and_grad(const Matrix& pred, const Matrix& target,
                                          LossSpec loss, Matrix* grad) {
  const double count = static_cast<double>(pred.size());
  if (loss.kind == LossKind::Mse) {
    const Matrix diff = pred - target;
    if (grad) *grad = (2.0 / count) * diff;
    return diff.squaredNorm() / count;
  }
  double total = 0.0;
  if (grad) grad->resize(pred.rows(), pred.cols());
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      total += pinball_loss(target(i, j), pred(i, j), loss.alpha);
      if (grad) (*grad)(i, j) = pinball_grad(target(i, j), pred(i, j), loss.alpha) / count;
    }
  return total / count;
}

double SupervisedObjective::batch_loss(std::span<const std::size_t> rows, Rng& rng,
                                       std::vector<MlpGrads>& grads) {
  const Matrix xb = gather_columns(x_, rows);
  const Matrix yb = gather_columns(y_, rows);
  MlpTape tape;
  const Matrix pred = model_.forward_train(xb, tape, rng, true);
  Matrix g;
  const double loss = loss_and_grad(pred, yb, loss_, &g);
  model_.backward(tape, g, grads[0]);
  return loss;
}

double SupervisedObjective::validation_loss() {
  return loss_and_grad(model_.predict(x_val_), y_val_, loss_, nullptr);
}

TrainHistory fit_supervised(Mlp& model, const Matrix& x, const Matrix& y, LossSpec loss,
                            const TrainConfig& config, const Matrix& x_val, const Matrix& y_val) {
  SupervisedObjective objective(model, x, y, loss, x_val, y_val);
  return train(objective, config);
}

}  // namespace mqr
