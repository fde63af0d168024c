#pragma once

// YAML encoding shared by io.cpp and experiment.cpp. Decoders start from a base value
// and override only the keys present; unknown keys are configuration errors.

#include "phasediv/correct.hpp"
#include "phasediv/errors.hpp"
#include "phasediv/gaussian.hpp"
#include "phasediv/poisson.hpp"
#include "phasediv/simulate.hpp"

#include <yaml-cpp/yaml.h>

#include <initializer_list>
#include <string>
#include <vector>

namespace phasediv::yaml {

inline void check_keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + ": invalid value");
  }
}

inline YAML::Node encode(const OpticalConfig& c) {
  YAML::Node n;
  n["na"] = c.na;
  n["wavelength"] = c.wavelength;
  n["medium_index"] = c.medium_index;
  n["pixel_pitch"] = c.pixel_pitch;
  n["grid_size"] = c.grid_size;
  return n;
}

inline OpticalConfig decode_optics(const YAML::Node& n, OpticalConfig c = {}) {
  const std::string where = "optics";
  check_keys(n, {"na", "wavelength", "medium_index", "pixel_pitch", "grid_size"}, where);
  if (!n) return c;
  read(n, "na", c.na, where);
  read(n, "wavelength", c.wavelength, where);
  read(n, "medium_index", c.medium_index, where);
  read(n, "pixel_pitch", c.pixel_pitch, where);
  read(n, "grid_size", c.grid_size, where);
  return c;
}

inline YAML::Node encode(const NoiseParams& p) {
  YAML::Node n;
  n["quantum_efficiency"] = p.quantum_efficiency;
  n["photons_per_pixel"] = p.photons_per_pixel;
  n["dark_mean"] = p.dark_mean;
  n["read_sigma"] = p.read_sigma;
  n["noiseless"] = p.noiseless;
  return n;
}

inline NoiseParams decode_noise(const YAML::Node& n, NoiseParams p = {}) {
  const std::string where = "noise";
  check_keys(n, {"preset", "quantum_efficiency", "photons_per_pixel", "dark_mean", "read_sigma", "noiseless"}, where);
  if (!n) return p;
  if (n["preset"]) {
    const auto preset = n["preset"].as<std::string>();
    if (preset == "low") {
      p = NoiseParams::low_additive(p.photons_per_pixel);
    } else if (preset == "high") {
      p = NoiseParams::high_additive(p.photons_per_pixel);
    } else if (preset == "none") {
      p = NoiseParams::none(p.photons_per_pixel);
    } else {
      throw ConfigError("noise.preset must be low, high or none");
    }
  }
  read(n, "quantum_efficiency", p.quantum_efficiency, where);
  read(n, "photons_per_pixel", p.photons_per_pixel, where);
  read(n, "dark_mean", p.dark_mean, where);
  read(n, "read_sigma", p.read_sigma, where);
  read(n, "noiseless", p.noiseless, where);
  return p;
}

inline YAML::Node encode(const ObjectSpec& s) {
  YAML::Node n;
  n["kind"] = to_string(s.kind);
  n["canvas_size"] = s.canvas_size;
  n["cell_count"] = s.cell_count;
  n["feature_scale"] = s.feature_scale;
  n["texture_strength"] = s.texture_strength;
  n["support_size"] = s.support_size;
  return n;
}

/// Knobs not given in the node keep the preset for the requested kind.
inline ObjectSpec decode_object(const YAML::Node& n, int canvas_size) {
  const std::string where = "object";
  check_keys(n, {"kind", "canvas_size", "cell_count", "feature_scale", "texture_strength", "support_size"}, where);
  ObjectKind kind = ObjectKind::CellsDense;
  if (n && n["kind"]) kind = parse_object_kind(n["kind"].as<std::string>());
  if (n) read(n, "canvas_size", canvas_size, where);
  ObjectSpec s = ObjectSpec::preset(kind, canvas_size);
  if (!n) return s;
  read(n, "cell_count", s.cell_count, where);
  read(n, "feature_scale", s.feature_scale, where);
  read(n, "texture_strength", s.texture_strength, where);
  read(n, "support_size", s.support_size, where);
  return s;
}

inline YAML::Node encode_indices(const std::vector<int>& idx) {
  YAML::Node n;
  for (int j : idx) n.push_back(j);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline std::vector<int> decode_indices(const YAML::Node& n, const std::string& where) {
  if (n.IsScalar()) {
    // "4..15"
    const auto text = n.as<std::string>();
    const auto dots = text.find("..");
    if (dots == std::string::npos) throw ConfigError(where + ": expected a list or a range like 4..15");
    try {
      return noll_range(std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2)));
    } catch (const std::logic_error&) {
      throw ConfigError(where + ": invalid range '" + text + "'");
    }
  }
  try {
    return n.as<std::vector<int>>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + ": invalid index list");
  }
}

inline YAML::Node encode(const GaussianOptions& o) {
  YAML::Node n;
  n["estimated_indices"] = encode_indices(o.estimated_indices);
  n["max_iterations"] = o.max_iterations;
  n["gradient_norm_tol"] = o.gradient_norm_tol;
  n["object_regularization"] = o.object_regularization;
  n["initial_coeff"] = o.initial_coeff;
  n["step_tol"] = o.step_tol;
  n["armijo"] = o.armijo;
  n["backtrack_factor"] = o.backtrack_factor;
  n["max_backtracks"] = o.max_backtracks;
  n["subtract_mean"] = o.subtract_mean;
  n["edge_taper"] = o.edge_taper;
  return n;
}

inline GaussianOptions decode_gaussian(const YAML::Node& n, GaussianOptions o = {}) {
  const std::string where = "gaussian";
  check_keys(n,
             {"estimated_indices", "max_iterations", "gradient_norm_tol", "object_regularization", "initial_coeff",
              "step_tol", "armijo", "backtrack_factor", "max_backtracks", "subtract_mean", "edge_taper"},
             where);
  if (!n) return o;
  if (n["estimated_indices"]) o.estimated_indices = decode_indices(n["estimated_indices"], where);
  read(n, "max_iterations", o.max_iterations, where);
  read(n, "gradient_norm_tol", o.gradient_norm_tol, where);
  read(n, "object_regularization", o.object_regularization, where);
  read(n, "initial_coeff", o.initial_coeff, where);
  read(n, "step_tol", o.step_tol, where);
  read(n, "armijo", o.armijo, where);
  read(n, "backtrack_factor", o.backtrack_factor, where);
  read(n, "max_backtracks", o.max_backtracks, where);
  read(n, "subtract_mean", o.subtract_mean, where);
  read(n, "edge_taper", o.edge_taper, where);
  return o;
}

inline YAML::Node encode(const PoissonOptions& o) {
  YAML::Node n;
  n["estimated_indices"] = encode_indices(o.estimated_indices);
  n["max_outer_iterations"] = o.max_outer_iterations;
  n["gradient_norm_tol"] = o.gradient_norm_tol;
  n["object_inner_iterations"] = o.object_inner_iterations;
  n["initial_coeff"] = o.initial_coeff;
  n["floor"] = o.floor;
  n["line_search_evaluations"] = o.line_search_evaluations;
  n["initial_step"] = o.initial_step;
  return n;
}

inline PoissonOptions decode_poisson(const YAML::Node& n, PoissonOptions o = {}) {
  const std::string where = "poisson";
  check_keys(n,
             {"estimated_indices", "max_outer_iterations", "gradient_norm_tol", "object_inner_iterations",
              "initial_coeff", "floor", "line_search_evaluations", "initial_step"},
             where);
  if (!n) return o;
  if (n["estimated_indices"]) o.estimated_indices = decode_indices(n["estimated_indices"], where);
  read(n, "max_outer_iterations", o.max_outer_iterations, where);
  read(n, "gradient_norm_tol", o.gradient_norm_tol, where);
  read(n, "object_inner_iterations", o.object_inner_iterations, where);
  read(n, "initial_coeff", o.initial_coeff, where);
  read(n, "floor", o.floor, where);
  read(n, "line_search_evaluations", o.line_search_evaluations, where);
  read(n, "initial_step", o.initial_step, where);
  return o;
}

inline YAML::Node encode(const ZernikeVector& c) {
  YAML::Node n(YAML::NodeType::Map);
  for (const auto& [j, v] : c) n[j] = v;
  return n;
}

inline ZernikeVector decode_coeffs(const YAML::Node& n, const std::string& where) {
  ZernikeVector c;
  if (!n) return c;
  if (!n.IsMap()) throw ConfigError(where + ": expected a mapping from Noll index to radians");
  for (const auto& kv : n) {
    try {
      c.set(kv.first.as<int>(), kv.second.as<double>());
    } catch (const YAML::Exception&) {
      throw ConfigError(where + ": invalid coefficient entry");
    }
  }
  return c;
}

}  // namespace phasediv::yaml
