// Python bindings for the core library.

#include "mqr/calibration.hpp"
#include "mqr/errors.hpp"
#include "mqr/experiment.hpp"
#include "mqr/naive_qr.hpp"
#include "mqr/numerics.hpp"
#include "mqr/regions.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mqr;

namespace {

// Wraps a Python callable x -> (m, d) array as a region provider.
std::shared_ptr<RegionProvider> callable_provider(int dim, py::function fn) {
  auto holder = std::make_shared<py::function>(std::move(fn));
  return std::make_shared<FunctionRegionProvider>(dim, [holder, dim](const Vector& x) {
    py::gil_scoped_acquire gil;
    DiscreteRegion r;
    r.points = (*holder)(x).cast<PointMatrix>();
    if (r.points.rows() > 0 && r.points.cols() != dim)
      throw InvalidArgument("region callable returned " + std::to_string(r.points.cols()) + " columns, expected " +
                            std::to_string(dim));
    if (r.points.rows() == 0) r.points.resize(0, dim);
    r.source_x = x;
    return r;
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multivariate quantile regions with conformal calibration";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<CalibrationSetTooSmall>(m, "CalibrationSetTooSmall", PyExc_RuntimeError);
  py::register_exception<DegenerateRegion>(m, "DegenerateRegion", PyExc_RuntimeError);
  py::register_exception<DegenerateComplement>(m, "DegenerateComplement", PyExc_RuntimeError);

  m.def("dqr_theoretical_coverage", &dqr_theoretical_coverage, py::arg("alpha"), py::arg("r"));
  m.def("dqr_coverage_monte_carlo", &dqr_coverage_monte_carlo, py::arg("alpha"), py::arg("r"),
        py::arg("samples"), py::arg("seed") = 0);
  m.def(
      "naive_levels",
      [](double alpha, int d, const std::string& rule) { return naive_levels(alpha, d, level_rule_from_string(rule)); },
      py::arg("alpha"), py::arg("d"), py::arg("rule") = "main");

  m.def(
      "gen_synthetic",
      [](const std::string& setting, int d, int p, std::size_t n, std::uint64_t seed) {
        Dataset data = gen_synthetic(setting_from_string(setting), d, p, n, seed);
        return py::make_tuple(data.x, data.y);
      },
      py::arg("setting"), py::arg("d"), py::arg("p"), py::arg("n"), py::arg("seed") = 0,
      "Returns (x, y) with one sample per row.");

  py::class_<Grid>(m, "Grid")
      .def_property_readonly("low", &Grid::low)
      .def_property_readonly("high", &Grid::high)
      .def_property_readonly("cells", &Grid::cells)
      .def_property_readonly("purpose", [](const Grid& g) { return std::string(to_string(g.purpose())); })
      .def_property_readonly("size", &Grid::size)
      .def_property_readonly("cell_volume", &Grid::cell_volume)
      .def("points", &Grid::points);
  m.def(
      "build_grid",
      [](const Matrix& y, const std::string& purpose) { return build_grid(y, grid_purpose_from_string(purpose)); },
      py::arg("responses"), py::arg("purpose") = "area");

  m.def(
      "gamma_init", [](const PointMatrix& points) { return gamma_init(KdTree(points)); }, py::arg("points"));

  py::class_<CalibratedRule>(m, "CalibratedRule")
      .def_property_readonly("mode", [](const CalibratedRule& r) { return std::string(to_string(r.mode)); })
      .def_readonly("alpha", &CalibratedRule::alpha)
      .def_readonly("n_cal", &CalibratedRule::n_cal)
      .def_readonly("c_init", &CalibratedRule::c_init)
      .def_readonly("gamma_cal", &CalibratedRule::gamma_cal)
      .def_readonly("gamma_init_median", &CalibratedRule::gamma_init_median)
      .def(
          "contains",
          [](const CalibratedRule& r, const Vector& x, const PointMatrix& y) {
            const PreparedRegion pr = r.prepare(x);
            std::vector<bool> out(static_cast<std::size_t>(y.rows()));
            for (Eigen::Index i = 0; i < y.rows(); ++i) out[static_cast<std::size_t>(i)] = pr.contains(y.row(i).data());
            return out;
          },
          py::arg("x"), py::arg("y"), "Membership of each row of y in the calibrated region at x.")
      .def(
          "area", [](const CalibratedRule& r, const Vector& x, const Grid& grid) { return r.prepare(x).area(grid); },
          py::arg("x"), py::arg("grid"))
      .def("to_json", [](const CalibratedRule& r) { return r.to_json().dump(); });

  m.def(
      "calibrate",
      [](py::function region, int dim, const Matrix& x, const Matrix& y, double alpha,
         std::optional<Grid> complement_grid, double fallback_gamma) {
        CalibrationOptions o;
        o.complement_grid = std::move(complement_grid);
        o.fallback_gamma = fallback_gamma;
        return calibrate(callable_provider(dim, std::move(region)), x, y, alpha, o);
      },
      py::arg("region"), py::arg("dim"), py::arg("x"), py::arg("y"), py::arg("alpha"),
      py::arg("complement_grid") = std::nullopt, py::arg("fallback_gamma") = 0.0,
      "Calibrates a region callable x -> (m, dim) point array on rows of (x, y).");

  m.def(
      "config_hash",
      [](const std::string& config_json) {
        return ExperimentConfig::from_json(nlohmann::json::parse(config_json)).hash();
      },
      py::arg("config_json"));
  m.def(
      "run_experiment",
      [](const std::string& config_json, bool resume) {
        const ExperimentConfig config = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        RunOptions o;
        o.resume = resume;
        std::vector<ReportRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_experiment(config, o);
        }
        std::vector<std::string> out;
        for (const auto& r : rows) out.push_back(r.to_json().dump());
        return out;
      },
      py::arg("config_json"), py::arg("resume") = false, "Runs every (seed, method) cell; rows as JSON strings.");
}
