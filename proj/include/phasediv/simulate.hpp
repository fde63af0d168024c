#pragma once

#include "phasediv/field.hpp"
#include "phasediv/optics.hpp"
#include "phasediv/stack.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace phasediv {

using Rng = std::mt19937_64;

enum class ObjectKind { CellsDense, CellsSparse, Filaments, Texture };

std::string to_string(ObjectKind kind);
ObjectKind parse_object_kind(const std::string& name);

/// Parameters of the synthetic object generator.
struct ObjectSpec {
  ObjectKind kind = ObjectKind::CellsDense;
  int canvas_size = 1024;
  int cell_count = 60;           // cells, or filaments for ObjectKind::Filaments
  double feature_scale = 14.0;   // cell radius / filament smoothing length, pixels
  double texture_strength = 0.6; // relative amplitude of interior texture
  std::uint64_t seed = 1;
  /// Side of the central square outside which the object is zero; 0 keeps the whole canvas.
  /// With support_size <= N - 2 * (PSF radius), crop-convolution and cyclic convolution agree.
  int support_size = 0;

  /// Reasonable defaults for each kind on the given canvas.
  static ObjectSpec preset(ObjectKind kind, int canvas_size, std::uint64_t seed = 1);

  void validate(int target_size) const;
};

/// Camera noise d = QE * Poisson(I_ph) + Poisson(I_dc) + N(0, sigma_r^2).
struct NoiseParams {
  double quantum_efficiency = 0.6;
  double photons_per_pixel = 500.0;
  double dark_mean = 1.0;
  double read_sigma = 2.0;
  /// Replace every random draw by its mean (QE * I_ph + I_dc).
  bool noiseless = false;

  static NoiseParams low_additive(double photons_per_pixel = 500.0);
  static NoiseParams high_additive(double photons_per_pixel = 500.0);
  static NoiseParams none(double photons_per_pixel = 500.0);

  void validate() const;
};

enum class SpatialFrequency { Low, High };

struct SpatialVarianceParams {
  double magnitude = 0.0;  // per-tile perturbation wrms relative to the isoplanatic wrms
  SpatialFrequency correlation = SpatialFrequency::Low;

  /// Tiles per axis: 2 for low-frequency variation, 8 for high.
  int tiles_per_axis() const { return correlation == SpatialFrequency::Low ? 2 : 8; }
};

struct PhaseNoiseParams {
  double sigma = 0.0;  // radians, per coefficient
};

/// Deterministic nonnegative object with values in [0, 1].
RealField generate_object(const ObjectSpec& spec);

/// 42 coefficients j = 4..45 drawn from U(-1, 1); j = 4..15 scaled to target_wrms and
/// j = 16..45 to target_wrms / 2, using the norms of `grid`.
AberrationSample sample_aberration(double target_wrms, Rng& rng, const FrequencyGrid& grid);

/// Linear convolution of a large canvas with an N x N (DFT-ordered) PSF, cropped to the
/// central N x N region. The canvas must leave a margin of at least N/2 on each side.
RealField convolve_cropped(const RealField& object, const Psf& psf);

/// Rescales `image` to mean photons_per_pixel and applies the three-component noise model.
RealField apply_noise(const RealField& image, const NoiseParams& noise, Rng& rng);

/// Full pipeline for one aberration: PSF per diversity plane, crop-convolution, noise.
DiversityStack simulate_stack(const ObjectSpec& spec, const AberrationSample& aberration,
                              std::span<const double> diversity_z, const NoiseParams& noise,
                              const OpticalConfig& config, Rng& rng);

/// Same with a precomputed object canvas.
DiversityStack simulate_stack(const RealField& object, const AberrationSample& aberration,
                              std::span<const double> diversity_z, const NoiseParams& noise,
                              const OpticalConfig& config, Rng& rng);

/// Each diversity image k is formed through its own wavefront[k]; truth is `aberration`.
DiversityStack simulate_stack_per_image(const RealField& object, const AberrationSample& aberration,
                                        std::span<const ZernikeVector> wavefronts,
                                        std::span<const double> diversity_z, const NoiseParams& noise,
                                        const OpticalConfig& config, Rng& rng);

/// Zero-mean per-tile perturbations (tiles_per_axis^2 vectors, row-major tile order).
std::vector<ZernikeVector> spatial_variance_perturbations(const ZernikeVector& aberration,
                                                          const SpatialVarianceParams& sv, Rng& rng);

/// Raised-cosine partition-of-unity weight of tile (ty, tx) over an n x n image.
RealField tile_weight(int n, int tiles_per_axis, int ty, int tx);

DiversityStack simulate_spatially_variant_stack(const ObjectSpec& spec, const AberrationSample& aberration,
                                                const SpatialVarianceParams& sv,
                                                std::span<const double> diversity_z, const NoiseParams& noise,
                                                const OpticalConfig& config, Rng& rng);

/// K per-image wavefronts: aberration plus zero-mean Gaussian Zernike perturbations.
std::vector<ZernikeVector> apply_phase_noise(const ZernikeVector& aberration, std::span<const double> diversity_z,
                                             const PhaseNoiseParams& pn, Rng& rng);

/// Noiseless expected image (before photon rescaling) of `object` through `wavefront`
/// at axial offset z.
RealField form_image(const RealField& object, const ZernikeVector& wavefront, double z,
                     const FrequencyGrid& grid);

/// Min-max normalization to [0, 1], used only for display export.
RealField normalize_for_display(const RealField& image);

}  // namespace phasediv
