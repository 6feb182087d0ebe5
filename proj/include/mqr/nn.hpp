#pragma once

// Feed-forward network with hand-written backpropagation, Adam and an
// early-stopping training loop. Shared by the directional quantile nets,
// the per-dimension quantile nets and both halves of the CVAE.

#include "mqr/numerics.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mqr {

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output
  double leaky_slope = 0.2;
  double dropout = 0.0;
  bool batch_norm = false;  // applied to every hidden layer before the activation
};

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1
  // Batch-norm parameters, empty when disabled.
  Matrix bn_scale;
  Matrix bn_shift;
  Vector running_mean;
  Vector running_var;
};

// Gradient buffers mirroring the trainable parameters of an Mlp.
struct MlpGrads {
  std::vector<Matrix> tensors;
  void set_zero();
};

// Activations cached by a training-mode forward pass.
struct MlpTape {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> pre;          // activation input (after bn)
  std::vector<Matrix> normalized;   // bn x-hat
  std::vector<Vector> inv_std;      // bn 1/sqrt(var+eps)
  std::vector<Matrix> masks;        // dropout masks (already scaled)
  bool batch_stats = false;         // bn used batch statistics
};

/// Multilayer perceptron with leaky-ReLU hidden activations and a linear
/// output. Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& init_rng);

  const MlpSpec& spec() const noexcept { return spec_; }
  int input_width() const { return spec_.widths.front(); }
  int output_width() const { return spec_.widths.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Single sample. Dropout and batch statistics are used only when
  // train_mode is set, in which case rng must be provided.
  Vector forward(const Vector& input, bool train_mode = false, Rng* rng = nullptr) const;

  // Eval-mode batch forward (columns are samples).
  Matrix predict(const Matrix& inputs) const;

  // Forward pass that records a tape for backward(). Batch-norm running
  // statistics are updated when train_mode is set.
  Matrix forward_train(const Matrix& inputs, MlpTape& tape, Rng& rng, bool train_mode = true);

  // Accumulates parameter gradients for d(loss)/d(output) = grad_output and
  // returns d(loss)/d(input).
  Matrix backward(const MlpTape& tape, const Matrix& grad_output, MlpGrads& grads) const;

  MlpGrads make_grads() const;
  // Trainable tensors in a fixed order (weight, bias[, scale, shift]) per layer.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Mlp load(const std::string& path);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

// Pinball (check) loss of a prediction yhat for target y at level alpha.
double pinball_loss(double y, double yhat, double alpha);
// d(pinball)/d(yhat); at y == yhat the "otherwise" branch slope (1-alpha) is used.
double pinball_grad(double y, double yhat, double alpha);

// KL(N(mu, diag(exp(logvar))) || N(0, I)).
double gaussian_kl(std::span<const double> mu, std::span<const double> logvar);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& model, AdamConfig config);
  void step(Mlp& model, const MlpGrads& grads);
  long steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 10000;
  int patience = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;  // 0-based
  double best_validation_loss = 0.0;
  int epochs_run() const { return static_cast<int>(train_loss.size()); }
};

/// A training problem over one or more networks. train() drives the epoch
/// loop; the objective owns the data and the loss.
class TrainObjective {
 public:
  virtual ~TrainObjective() = default;
  virtual std::vector<Mlp*> networks() = 0;
  virtual std::size_t train_size() const = 0;
  // Mean loss over the given training rows; accumulates gradients of that
  // mean into grads (one MlpGrads per network, already zeroed).
  virtual double batch_loss(std::span<const std::size_t> rows, Rng& rng,
                            std::vector<MlpGrads>& grads) = 0;
  // Deterministic eval-mode loss on held-out data.
  virtual double validation_loss() = 0;
};

/// Mini-batch Adam with early stopping. On return the networks hold the
/// snapshot with the lowest validation loss. Throws TrainingDiverged on a
/// non-finite loss.
TrainHistory train(TrainObjective& objective, const TrainConfig& config);

enum class LossKind { Mse, Pinball };

struct LossSpec {
  LossKind kind = LossKind::Mse;
  double alpha = 0.5;  // pinball level
};

/// Plain supervised regression: inputs rows x_i, targets rows y_i.
class SupervisedObjective final : public TrainObjective {
 public:
  SupervisedObjective(Mlp& model, const Matrix& x, const Matrix& y, LossSpec loss,
                      const Matrix& x_val, const Matrix& y_val);
  std::vector<Mlp*> networks() override { return {&model_}; }
  std::size_t train_size() const override { return static_cast<std::size_t>(x_.cols()); }
  double batch_loss(std::span<const std::size_t> rows, Rng& rng,
                    std::vector<MlpGrads>& grads) override;
  double validation_loss() override;

  // Mean loss and its gradient with respect to the predictions (columns).
  static double loss_and_grad(const Matrix& pred, const Matrix& target, LossSpec loss,
                              Matrix* grad);

 private:
  Mlp& model_;
  Matrix x_;  // samples as columns
  Matrix y_;
  LossSpec loss_;
  Matrix x_val_;
  Matrix y_val_;
};

TrainHistory fit_supervised(Mlp& model, const Matrix& x, const Matrix& y, LossSpec loss,
                            const TrainConfig& config, const Matrix& x_val, const Matrix& y_val);

// Gathers columns of a column-major sample matrix.
Matrix gather_columns(const Matrix& samples, std::span<const std::size_t> cols);

}  // namespace mqr
