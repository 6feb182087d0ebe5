#pragma once

// Spherically transformed directional quantile regression: fit a CVAE,
// run NPDQR on the encoded responses, and decode the latent region back to
// the response space.

#include "mqr/calibration.hpp"
#include "mqr/cvae.hpp"
#include "mqr/npdqr.hpp"

#include <string>

namespace mqr {

struct StdqrConfig {
  CvaeConfig cvae{};
  NpdqrConfig npdqr{};
  double directional_level = 0.93;  // pre-calibration level of each half-space
};

class StdqrModel {
 public:
  CvaeModel cvae;
  NpdqrModel latent;
  Grid latent_grid;

  int response_dim() const { return cvae.response_dim; }
  DiscreteRegion latent_region(const Vector& x) const;
  // Decoded latent region; empty when the latent region is empty.
  DiscreteRegion region(const Vector& x) const;

  // Directory with cvae.json, npdqr.json and manifest.json.
  void save_bundle(const std::string& dir) const;
  static StdqrModel load_bundle(const std::string& dir);
};

/// Trains the CVAE on (x, y), encodes the responses with z = mu, builds the
/// latent grid from the encoded training latents and fits NPDQR on (x, z).
StdqrModel fit_stdqr(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                     const StdqrConfig& config);

class StdqrRegionProvider final : public RegionProvider {
 public:
  explicit StdqrRegionProvider(std::shared_ptr<const StdqrModel> model) : model_(std::move(model)) {}
  int response_dim() const override { return model_->response_dim(); }
  DiscreteRegion region(const Vector& x) const override { return model_->region(x); }

 private:
  std::shared_ptr<const StdqrModel> model_;
};

}  // namespace mqr
