#include "phasediv/correct.hpp"

#include "phasediv/diversity_model.hpp"
#include "phasediv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phasediv {

void CorrectionOptions::validate() const {
  if (estimator != "poisson" && estimator != "gaussian") {
    throw ConfigError("correction: estimator must be poisson or gaussian");
  }
  if (rl_iterations < 1) throw ConfigError("correction: rl_iterations must be >= 1");
  if (border_at_256 < 0) throw ConfigError("correction: border must be >= 0");
  if (!(dose_factor >= 1.0)) throw ConfigError("correction: dose_factor must be >= 1");
  if (!(floor > 0.0)) throw ConfigError("correction: floor must be positive");
  poisson.validate();
  gaussian.validate();
}

RealField rl_deconvolve_multi(const DiversityStack& stack, const ZernikeVector& c, int iterations, double floor) {
  if (iterations < 1) throw ConfigError("rl_deconvolve_multi: iterations must be >= 1");
  stack.validate();
  DiversityModel model(stack.config, stack.diversity_z, c.indices());
  const auto fwd = model.forward(c, DiversityModel::OtfMode::Half);
  const auto images = clamp_images(stack.images, floor);
  double flux = 0.0;
  for (const auto& d : images) flux += d.mean();
  flux /= static_cast<double>(images.size());
  const int n = stack.config.grid_size;
  RealField f = RealField::Constant(n, n, flux);
  for (int i = 0; i < iterations; ++i) f = em_update_kernel(f, fwd.otf, images, floor);
  return f;
}

RealField simulate_reacquisition(const RealField& object, const AberrationSample& truth,
                                 const ZernikeVector& estimate, const NoiseParams& noise,
                                 const OpticalConfig& config, Rng& rng) {
  const FrequencyGrid grid(config);
  const RealField clean = form_image(object, truth.coeffs - estimate, 0.0, grid);
  return apply_noise(clean.max(0.0), noise, rng);
}

RealField ideal_reference(const RealField& object, const AberrationSample& truth, std::span<const int> corrected,
                          const OpticalConfig& config) {
  ZernikeVector residual = truth.coeffs;
  for (int j : corrected) {
    if (residual.contains(j)) residual.set(j, 0.0);
  }
  const FrequencyGrid grid(config);
  return form_image(object, residual, 0.0, grid).max(0.0);
}

namespace {

std::vector<double> gaussian_window() {
  constexpr int kTaps = 11;
  constexpr double kSigma = 1.5;
  std::vector<double> w(kTaps);
  double total = 0.0;
  for (int i = 0; i < kTaps; ++i) {
    const double x = i - kTaps / 2;
    w[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable filtering keeping only positions where the whole window fits.
RealField filter_valid(const RealField& in, const std::vector<double>& w) {
  const Eigen::Index taps = static_cast<Eigen::Index>(w.size());
  const Eigen::Index rows = in.rows() - taps + 1;
  const Eigen::Index cols = in.cols() - taps + 1;
  RealField tmp = RealField::Zero(in.rows(), cols);
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < taps; ++t) s += w[t] * in(r, c + t);
      tmp(r, c) = s;
    }
  }
  RealField out = RealField::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index t = 0; t < taps; ++t) out.row(r) += w[t] * tmp.row(r + t);
  }
  return out;
}

}  // namespace

double ssim(const RealField& image, const RealField& reference) {
  if (image.rows() != reference.rows() || image.cols() != reference.cols()) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  const auto w = gaussian_window();
  if (image.rows() < static_cast<Eigen::Index>(w.size()) || image.cols() < static_cast<Eigen::Index>(w.size())) {
    throw std::invalid_argument("ssim: image smaller than the 11 pixel window");
  }
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const RealField mx = filter_valid(image, w);
  const RealField my = filter_valid(reference, w);
  const RealField sxx = filter_valid(image * image, w) - mx * mx;
  const RealField syy = filter_valid(reference * reference, w) - my * my;
  const RealField sxy = filter_valid(image * reference, w) - mx * my;
  const RealField num = (2.0 * mx * my + kC1) * (2.0 * sxy + kC2);
  const RealField den = (mx * mx + my * my + kC1) * (sxx + syy + kC2);
  return (num / den).mean();
}

int ssim_border(int n, int border_at_256) {
  return static_cast<int>(std::lround(static_cast<double>(border_at_256) * n / 256.0));
}

RealField prepare_for_ssim(const RealField& image, int border) {
  if (border < 0 || 2 * border >= image.rows() || 2 * border >= image.cols()) {
    throw std::invalid_argument("prepare_for_ssim: border too large");
  }
  return normalize_for_display(image.block(border, border, image.rows() - 2 * border, image.cols() - 2 * border));
}

namespace {

ZernikeVector run_estimator(const DiversityStack& stack, const CorrectionOptions& opts) {
  if (opts.estimator == "gaussian") return estimate_gaussian(stack, opts.gaussian).coeffs;
  return estimate_poisson(stack, opts.poisson).coeffs;
}

std::size_t in_focus_index(const DiversityStack& stack) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < stack.diversity_z.size(); ++k) {
    if (std::abs(stack.diversity_z[k]) < std::abs(stack.diversity_z[best])) best = k;
  }
  return best;
}

std::vector<int> estimated_indices(const CorrectionOptions& opts) {
  return opts.estimator == "gaussian" ? opts.gaussian.estimated_indices : opts.poisson.estimated_indices;
}

}  // namespace

CorrectionReport compare_correction(const RealField& object, const AberrationSample& truth,
                                    const NoiseParams& noise, const OpticalConfig& config,
                                    const CorrectionOptions& opts, Rng& rng) {
  opts.validate();
  const auto diversity = default_diversity(config);
  const FrequencyGrid grid(config);
  const auto corrected = estimated_indices(opts);
  const ZernikeNorms norms = relative_zernike_norms(4, 45, grid);

  CorrectionReport report;
  report.photons_per_pixel = noise.photons_per_pixel;
  report.dose_factor = opts.dose_factor;

  // Deconvolution path: three diversity images at the nominal dose.
  const DiversityStack stack = simulate_stack(object, truth, diversity, noise, config, rng);
  const ZernikeVector c_decon = run_estimator(stack, opts);
  const RealField deconvolved = rl_deconvolve_multi(stack, c_decon, opts.rl_iterations, opts.floor);
  const RealField uncorrected = stack.images[in_focus_index(stack)];

  // Re-acquisition path: the same total budget split over four acquisitions.
  NoiseParams reduced = noise;
  reduced.photons_per_pixel = noise.photons_per_pixel / opts.dose_factor;
  const DiversityStack stack_r = simulate_stack(object, truth, diversity, reduced, config, rng);
  const ZernikeVector c_reacq = run_estimator(stack_r, opts);
  const RealField reacquired = simulate_reacquisition(object, truth, c_reacq, reduced, config, rng);

  const RealField reference = ideal_reference(object, truth, corrected, config);
  const int border = ssim_border(config.grid_size, opts.border_at_256);
  const RealField ref = prepare_for_ssim(reference, border);
  report.ssim_deconvolved = ssim(prepare_for_ssim(deconvolved, border), ref);
  report.ssim_reacquired = ssim(prepare_for_ssim(reacquired, border), ref);
  report.ssim_uncorrected = ssim(prepare_for_ssim(uncorrected, border), ref);

  const ZernikeVector low = truth.coeffs.restricted_to(corrected);
  report.rwe_used = rwe(c_decon, low, norms);
  report.rwe_reacquisition = rwe(c_reacq, low, norms);
  return report;
}

std::vector<CorrectionReport> compare_corrections(const RealField& object, const AberrationSample& truth,
                                                  std::span<const double> photons_per_pixel,
                                                  const NoiseParams& base_noise, const OpticalConfig& config,
                                                  const CorrectionOptions& opts, Rng& rng) {
  if (photons_per_pixel.empty()) throw ConfigError("compare_corrections: empty photon sweep");
  std::vector<CorrectionReport> out;
  for (double p : photons_per_pixel) {
    NoiseParams noise = base_noise;
    noise.photons_per_pixel = p;
    out.push_back(compare_correction(object, truth, noise, config, opts, rng));
  }
  return out;
}

}  // namespace phasediv
