#include "mqr/stdqr.hpp"

#include "mqr/errors.hpp"

#include <filesystem>
#include <fstream>

namespace mqr {

DiscreteRegion StdqrModel::latent_region(const Vector& x) const {
  return latent.extract_region(x, latent_grid, Space::Latent);
}

DiscreteRegion StdqrModel::region(const Vector& x) const {
  DiscreteRegion z = latent_region(x);
  DiscreteRegion out;
  out.space = Space::Response;
  out.source_x = x;
  out.points = cvae.decode_points(x, z.points);
  return out;
}

void StdqrModel::save_bundle(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  cvae.save((root / "cvae.json").string());
  latent.save((root / "npdqr.json").string());
  const nlohmann::json manifest = {{"format", "mqr-stdqr"},
                                   {"version", 1},
                                   {"cvae", "cvae.json"},
                                   {"npdqr", "npdqr.json"},
                                   {"latent_dim", cvae.latent_dim},
                                   {"kl_weight", cvae.kl_weight},
                                   {"latent_grid", latent_grid.to_json()}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("cannot write bundle manifest in " + dir);
  out << manifest.dump(2);
}

StdqrModel StdqrModel::load_bundle(const std::string& dir) {
  const std::filesystem::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("cannot read bundle manifest in " + dir);
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "mqr-stdqr") throw ParseError(0, 0, "not an st-dqr bundle");
  StdqrModel m;
  m.cvae = CvaeModel::load((root / manifest.at("cvae").get<std::string>()).string());
  m.latent = NpdqrModel::load((root / manifest.at("npdqr").get<std::string>()).string());
  m.latent_grid = Grid::from_json(manifest.at("latent_grid"));
  if (m.latent.response_dim() != m.cvae.latent_dim)
    throw ParseError(0, 0, "bundle latent dimensions disagree");
  return m;
}

StdqrModel fit_stdqr(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                     const StdqrConfig& config) {
  if (!(config.directional_level > 0.5 && config.directional_level < 1.0))
    throw InvalidArgument("fit_stdqr: directional level must lie in (0.5, 1)");
  StdqrModel model;
  model.cvae = fit_cvae(x, y, config.cvae, x_val, y_val);
  const Matrix z = model.cvae.encode_mean(x, y);
  const Matrix z_val = model.cvae.encode_mean(x_val, y_val);
  model.latent_grid = build_grid(z, GridPurpose::RegionDiscretization);
  model.latent = fit_npdqr(x, z, 1.0 - config.directional_level, config.npdqr, x_val, z_val);
  return model;
}

}  // namespace mqr
