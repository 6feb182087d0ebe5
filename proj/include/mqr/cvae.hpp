#pragma once

// Conditional variational auto-encoder. The encoder maps [x; y] to the mean
// and log-variance of a Gaussian latent z in R^r, the decoder maps [x; z]
// back to y. Loss per sample: |y - D(z; x)|^2 + lambda * KL.

#include "mqr/nn.hpp"
#include "mqr/regions.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace mqr {

// Hidden widths of both CVAE halves for a feature dimension p.
std::vector<int> cvae_hidden_widths(int p);

struct CvaeConfig {
  int latent_dim = 3;
  double kl_weight = 0.01;
  std::vector<int> hidden;  // empty: pick by feature dimension
  double leaky_slope = 0.2;
  double dropout = 0.1;
  bool batch_norm = false;
  TrainConfig train{.learning_rate = 1e-3, .batch_size = 512, .max_epochs = 10000, .patience = 200};
  std::uint64_t seed = 0;
};

struct CvaeLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

class CvaeModel {
 public:
  Mlp encoder;  // [x; y] -> [mu; logvar]
  Mlp decoder;  // [x; z] -> y
  int feature_dim = 0;
  int response_dim = 0;
  int latent_dim = 0;
  double kl_weight = 0.01;
  TrainHistory history;

  // Deterministic (z = mu) unless stochastic, which needs rng.
  Vector encode(const Vector& x, const Vector& y, Rng* rng = nullptr, bool stochastic = false) const;
  Vector decode(const Vector& x, const Vector& z) const;

  // Posterior means for every row of (x, y).
  Matrix encode_mean(const Matrix& x, const Matrix& y) const;
  // Decodes every latent row under one input x.
  PointMatrix decode_points(const Vector& x, const PointMatrix& z) const;

  // Eval-mode loss with the given noise (one row per sample).
  CvaeLoss loss(const Matrix& x, const Matrix& y, const Matrix& eps) const;

  nlohmann::json to_json() const;
  static CvaeModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static CvaeModel load(const std::string& path);
};

// Builds untrained encoder/decoder networks.
CvaeModel make_cvae(int feature_dim, int response_dim, const CvaeConfig& config);

CvaeModel fit_cvae(const Matrix& x, const Matrix& y, const CvaeConfig& config, const Matrix& x_val,
                   const Matrix& y_val);

/// The CVAE objective, exposed for gradient checks. Noise for each training
/// row is drawn from the rng passed to batch_loss unless fixed noise is set.
class CvaeObjective final : public TrainObjective {
 public:
  CvaeObjective(CvaeModel& model, const Matrix& x, const Matrix& y, const Matrix& x_val,
                const Matrix& y_val, std::uint64_t val_seed);
  std::vector<Mlp*> networks() override { return {&model_.encoder, &model_.decoder}; }
  std::size_t train_size() const override { return static_cast<std::size_t>(xt_.cols()); }
  double batch_loss(std::span<const std::size_t> rows, Rng& rng,
                    std::vector<MlpGrads>& grads) override;
  double validation_loss() override;

  // Uses these noise columns (r x n_train) instead of fresh draws and
  // evaluates without dropout when train_mode is false.
  void fix_noise(Matrix eps_columns, bool train_mode);

 private:
  CvaeModel& model_;
  Matrix xt_, yt_;
  Matrix xv_, yv_, eps_val_;
  std::optional<Matrix> fixed_eps_;
  bool train_mode_ = true;
};

}  // namespace mqr
