#pragma once

#include "phasediv/field.hpp"
#include "phasediv/optics.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace phasediv {

/// Aberration drawn for a simulation, together with the magnitude it was scaled to.
struct AberrationSample {
  ZernikeVector coeffs;
  double target_wrms = 0.0;  // waves
};

/// K recorded images with their known axial diversity offsets (um).
struct DiversityStack {
  std::vector<RealField> images;
  std::vector<double> diversity_z;
  OpticalConfig config;
  std::optional<AberrationSample> truth;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(images.size()); }

  /// Throws ConfigError unless K >= 2, shapes agree with config.grid_size,
  /// and at least two diversities differ.
  void validate() const;
};

/// Default three-plane scheme {+3, 0, -3} wavelengths.
std::vector<double> default_diversity(const OpticalConfig& config);

/// Factor-2 binned copy of a stack: block sums when `photon_counts` (keeps
/// Poisson statistics), block means otherwise. Requires Nyquist sampling.
DiversityStack downscale_stack(const DiversityStack& stack, bool photon_counts);

}  // namespace phasediv
