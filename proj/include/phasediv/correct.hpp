#pragma once

#include "phasediv/field.hpp"
#include "phasediv/gaussian.hpp"
#include "phasediv/poisson.hpp"
#include "phasediv/simulate.hpp"
#include "phasediv/stack.hpp"

#include <string>
#include <vector>

namespace phasediv {

struct CorrectionReport {
  double photons_per_pixel = 0.0;  // nominal dose of the deconvolution path
  double ssim_deconvolved = 0.0;
  double ssim_reacquired = 0.0;
  double ssim_uncorrected = 0.0;
  double rwe_used = 0.0;           // waves, estimate used for deconvolution
  double rwe_reacquisition = 0.0;  // waves, estimate applied to the pupil for re-acquisition
  double dose_factor = 4.0 / 3.0;
};

struct CorrectionOptions {
  std::string estimator = "poisson";  // "poisson" or "gaussian"
  PoissonOptions poisson;
  GaussianOptions gaussian;
  int rl_iterations = 50;
  /// Border cropped before SSIM at a 256 pixel image; scaled with the image size.
  int border_at_256 = 8;
  /// Photon budget of the re-acquisition path relative to the deconvolution path. At a
  /// plotted dose P the re-acquisition path images (diversity and corrected) use P / dose_factor.
  double dose_factor = 4.0 / 3.0;
  double floor = 1e-8;

  void validate() const;
};

/// Multi-image Richardson-Lucy: f <- f * (1/K) sum_k s~_k (*) (d_k / (f (*) s_k)), PSFs from c plus
/// each diversity phase. Starts from a uniform object at the mean image flux.
RealField rl_deconvolve_multi(const DiversityStack& stack, const ZernikeVector& c, int iterations,
                              double floor = 1e-8);

/// Noisy in-focus image through the residual wavefront truth - estimate.
RealField simulate_reacquisition(const RealField& object, const AberrationSample& truth,
                                 const ZernikeVector& estimate, const NoiseParams& noise,
                                 const OpticalConfig& config, Rng& rng);

/// Noiseless in-focus image blurred only by diffraction and the truth terms outside `corrected`.
RealField ideal_reference(const RealField& object, const AberrationSample& truth, std::span<const int> corrected,
                          const OpticalConfig& config);

/// Mean SSIM over all positions of an 11-tap Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2.
/// Inputs are expected in [0, 1].
double ssim(const RealField& image, const RealField& reference);

/// Border width used before SSIM for an n x n image.
int ssim_border(int n, int border_at_256 = 8);

/// Crops `border` pixels on each side and min-max normalizes to [0, 1].
RealField prepare_for_ssim(const RealField& image, int border);

/// One photon level of the deconvolution vs re-acquisition comparison.
CorrectionReport compare_correction(const RealField& object, const AberrationSample& truth,
                                    const NoiseParams& noise, const OpticalConfig& config,
                                    const CorrectionOptions& opts, Rng& rng);

std::vector<CorrectionReport> compare_corrections(const RealField& object, const AberrationSample& truth,
                                                  std::span<const double> photons_per_pixel,
                                                  const NoiseParams& base_noise, const OpticalConfig& config,
                                                  const CorrectionOptions& opts, Rng& rng);

}  // namespace phasediv
