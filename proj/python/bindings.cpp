#include "phasediv/correct.hpp"
#include "phasediv/errors.hpp"
#include "phasediv/experiment.hpp"
#include "phasediv/gaussian.hpp"
#include "phasediv/io.hpp"
#include "phasediv/poisson.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>

namespace py = pybind11;
using namespace phasediv;

namespace {

ZernikeVector to_vector(const std::map<int, double>& coeffs) {
  ZernikeVector c;
  for (const auto& [j, v] : coeffs) c.set(j, v);
  return c;
}

std::map<int, double> to_map(const ZernikeVector& c) { return c.coeffs(); }

ExperimentConfig config_from(const std::string& yaml_text) { return parse_experiment_config(yaml_text); }

py::dict result_dict(const EstimationResult& r) {
  py::dict d;
  d["estimator"] = r.estimator;
  d["coeffs"] = to_map(r.coeffs);
  d["object"] = r.object_estimate;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["reason"] = r.reason;
  d["wall_time"] = r.wall_time;
  py::list objective;
  for (const auto& t : r.trace) objective.append(t.objective);
  d["objective_trace"] = objective;
  return d;
}

}  // namespace

PYBIND11_MODULE(_phasediv, m) {
  m.doc() = "Phase-diversity aberration estimation with Gaussian and Poisson noise models.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ExcessiveFailures>(m, "ExcessiveFailures", PyExc_RuntimeError);

  py::class_<OpticalConfig>(m, "OpticalConfig")
      .def(py::init([](double na, double wavelength, double medium_index, double pixel_pitch, int grid_size) {
             OpticalConfig o{na, wavelength, medium_index, pixel_pitch, grid_size};
             o.validate();
             return o;
           }),
           py::arg("na") = 1.2, py::arg("wavelength") = 0.6, py::arg("medium_index") = 1.33,
           py::arg("pixel_pitch") = 0.1, py::arg("grid_size") = 512)
      .def_readwrite("na", &OpticalConfig::na)
      .def_readwrite("wavelength", &OpticalConfig::wavelength)
      .def_readwrite("medium_index", &OpticalConfig::medium_index)
      .def_readwrite("pixel_pitch", &OpticalConfig::pixel_pitch)
      .def_readwrite("grid_size", &OpticalConfig::grid_size)
      .def("validate", &OpticalConfig::validate)
      .def("nyquist_sampled", &OpticalConfig::nyquist_sampled)
      .def("__repr__", [](const OpticalConfig& o) {
        return "OpticalConfig(na=" + std::to_string(o.na) + ", wavelength=" + std::to_string(o.wavelength) +
               ", pixel_pitch=" + std::to_string(o.pixel_pitch) + ", grid_size=" + std::to_string(o.grid_size) + ")";
      });

  py::class_<DiversityStack>(m, "Stack")
      .def(py::init([](std::vector<RealField> images, std::vector<double> diversity_z, const OpticalConfig& optics) {
             DiversityStack s;
             s.images = std::move(images);
             s.diversity_z = std::move(diversity_z);
             s.config = optics;
             s.validate();
             return s;
           }),
           py::arg("images"), py::arg("diversity_z"), py::arg("optics"))
      .def_readonly("images", &DiversityStack::images)
      .def_readonly("diversity_z", &DiversityStack::diversity_z)
      .def_readonly("optics", &DiversityStack::config)
      .def_readonly("seed", &DiversityStack::seed)
      .def_property_readonly("truth",
                             [](const DiversityStack& s) -> std::optional<std::map<int, double>> {
                               if (!s.truth) return std::nullopt;
                               return to_map(s.truth->coeffs);
                             })
      .def("__len__", &DiversityStack::count);

  m.def("noll_to_nm", [](int j) {
    const NollMode nm = noll_to_nm(j);
    return py::make_tuple(nm.n, nm.m);
  }, py::arg("j"), "Radial and signed azimuthal order of Noll index j.");
  m.def("zernike_value", &zernike_value, py::arg("j"), py::arg("rho"), py::arg("theta"));

  m.def(
      "psf",
      [](const std::map<int, double>& coeffs, double z, const OpticalConfig& optics) {
        const FrequencyGrid grid(optics);
        return psf_from_phase(phase_from_coeffs(to_vector(coeffs), grid), defocus_phase(z, grid), grid)
            .normalized()
            .intensities;
      },
      py::arg("coeffs"), py::arg("z") = 0.0, py::arg("optics") = OpticalConfig{},
      "Unit-sum incoherent PSF in DFT order (peak at [0, 0]).");

  m.def(
      "wrms",
      [](const std::map<int, double>& coeffs, const OpticalConfig& optics) {
        const ZernikeVector c = to_vector(coeffs);
        return wrms(c, relative_zernike_norms(c.indices(), FrequencyGrid(optics)));
      },
      py::arg("coeffs"), py::arg("optics") = OpticalConfig{}, "Wavefront RMS in waves of radian coefficients.");

  m.def(
      "rwe",
      [](const std::map<int, double>& estimated, const std::map<int, double>& truth, const OpticalConfig& optics) {
        const ZernikeVector est = to_vector(estimated);
        const auto idx = est.indices();
        return rwe(est, to_vector(truth).restricted_to(idx), relative_zernike_norms(idx, FrequencyGrid(optics)));
      },
      py::arg("estimated"), py::arg("truth"), py::arg("optics") = OpticalConfig{},
      "Residual wavefront error in waves over the estimated indices.");

  m.def(
      "simulate",
      [](const std::string& config_yaml, std::optional<double> axis_value, std::uint64_t seed) {
        const ExperimentConfig cfg = config_from(config_yaml);
        return simulate_trial_stack(cfg, axis_value.value_or(cfg.axis_values.front()), seed);
      },
      py::arg("config_yaml") = "", py::arg("axis_value") = py::none(), py::arg("seed") = 1,
      "Simulate the diversity stack of one trial of an experiment configuration (YAML text).");

  m.def(
      "estimate",
      [](const DiversityStack& stack, const std::string& estimator, const std::string& config_yaml) {
        const ExperimentConfig cfg = config_from(config_yaml);
        if (estimator != "gaussian" && estimator != "poisson") {
          throw ConfigError("estimator must be gaussian or poisson");
        }
        EstimationResult r;
        {
          py::gil_scoped_release release;
          r = estimator == "gaussian" ? estimate_gaussian(stack, cfg.gaussian) : estimate_poisson(stack, cfg.poisson);
        }
        return result_dict(r);
      },
      py::arg("stack"), py::arg("estimator") = "gaussian", py::arg("config_yaml") = "",
      "Estimate aberrations; estimator options come from the gaussian/poisson sections of the YAML.");

  m.def("ssim", &ssim, py::arg("image"), py::arg("reference"));
  m.def("read_stack", &read_stack, py::arg("directory"));
  m.def(
      "write_stack", [](const std::filesystem::path& dir, const DiversityStack& s) { write_stack(dir, s); },
      py::arg("directory"), py::arg("stack"));

  m.def(
      "run_experiment",
      [](const std::string& config_yaml) {
        const ExperimentConfig cfg = config_from(config_yaml);
        SweepResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        py::list points;
        for (const auto& p : r.points) {
          py::dict d;
          d["axis_value"] = p.axis_value;
          d["estimator"] = p.estimator;
          d["mean"] = p.mean;
          d["standard_error"] = p.standard_error;
          d["count"] = p.values.size();
          d["mean_wall_time"] = p.mean_wall_time;
          points.append(d);
        }
        py::dict out;
        out["metric"] = r.metric;
        out["points"] = points;
        out["planned_trials"] = r.planned_trials;
        out["failed_trials"] = r.failed_trials;
        return out;
      },
      py::arg("config_yaml"), "Run a sweep described by YAML text; outputs go to its output_dir.");
}
