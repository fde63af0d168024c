#include "phasediv/poisson.hpp"

#include "phasediv/diversity_model.hpp"
#include "phasediv/fft.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace phasediv {

void PoissonOptions::validate() const {
  if (estimated_indices.empty()) throw ConfigError("poisson: no estimated indices");
  for (int j : estimated_indices) {
    if (j < ZernikeVector::kMinIndex) throw ConfigError("poisson: estimated indices must be >= 4");
  }
  if (max_outer_iterations < 1) throw ConfigError("poisson: max_outer_iterations must be >= 1");
  if (!(gradient_norm_tol > 0.0)) throw ConfigError("poisson: gradient_norm_tol must be positive");
  if (object_inner_iterations < 1) throw ConfigError("poisson: object_inner_iterations must be >= 1");
  if (!(floor > 0.0)) throw ConfigError("poisson: floor must be positive");
  if (line_search_evaluations < 4) throw ConfigError("poisson: line_search_evaluations must be >= 4");
  if (!(initial_step > 0.0)) throw ConfigError("poisson: initial_step must be positive");
}

std::vector<RealField> clamp_images(std::span<const RealField> images, double floor) {
  std::vector<RealField> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(im.max(floor));
  return out;
}

namespace {

// All spectra below are half spectra (fft::forward_half) of n x n fields.

ComplexField half_of(const ComplexField& otf, Eigen::Index n) {
  if (otf.cols() == n / 2 + 1) return otf;
  return otf.leftCols(n / 2 + 1);
}

std::vector<ComplexField> half_otfs(std::span<const ComplexField> otfs, Eigen::Index n) {
  std::vector<ComplexField> out;
  out.reserve(otfs.size());
  for (const auto& o : otfs) out.push_back(half_of(o, n));
  return out;
}

RealField blur(const ComplexField& object_spectrum, const ComplexField& otf, int n) {
  return fft::inverse_half(object_spectrum * otf, n);
}

double likelihood_from_spectrum(const ComplexField& object_spectrum, std::span<const ComplexField> otfs,
                                std::span<const RealField> images, double floor) {
  const double log_floor = std::log(floor);
  const int n = static_cast<int>(images[0].cols());
  double total = 0.0;
  for (std::size_t k = 0; k < otfs.size(); ++k) {
    const RealField g = blur(object_spectrum, otfs[k], n);
    const auto& d = images[k];
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double gi = g.data()[i];
      total += d.data()[i] * (gi > floor ? std::log(gi) : log_floor) - gi;
    }
  }
  return total;
}

// Ratio d_k / (f (*) s_k) with the denominator clamped at floor.
RealField ratio(const ComplexField& object_spectrum, const ComplexField& otf, const RealField& image, double floor) {
  return image / blur(object_spectrum, otf, static_cast<int>(image.cols())).max(floor);
}

RealField em_step(const RealField& object, std::span<const ComplexField> otfs, std::span<const RealField> images,
                  double floor) {
  const int n = static_cast<int>(object.cols());
  const ComplexField f = fft::forward_half(object);
  ComplexField acc = ComplexField::Zero(f.rows(), f.cols());
  double psf_total = 0.0;
  for (std::size_t k = 0; k < otfs.size(); ++k) {
    acc += fft::forward_half(ratio(f, otfs[k], images[k], floor)) * otfs[k].conjugate();
    psf_total += otfs[k](0, 0).real();
  }
  return (object * fft::inverse_half(acc, n) / psf_total).max(0.0);
}

void check_inputs(const RealField& object, std::span<const ComplexField> otfs, std::span<const RealField> images) {
  if (otfs.size() != images.size() || otfs.empty()) throw std::invalid_argument("poisson: one OTF per image required");
  const Eigen::Index n = object.cols();
  if (object.rows() != n) throw std::invalid_argument("poisson: square object required");
  for (std::size_t k = 0; k < otfs.size(); ++k) {
    const bool otf_ok = otfs[k].rows() == n && (otfs[k].cols() == n || otfs[k].cols() == n / 2 + 1);
    if (!otf_ok || images[k].rows() != n || images[k].cols() != n) {
      throw std::invalid_argument("poisson: shape mismatch");
    }
  }
}

std::vector<double> gradient_from(const DiversityModel& model, const DiversityModel::Forward& fwd,
                                  const ComplexField& object_spectrum, std::span<const RealField> images,
                                  std::span<const int> indices, double floor) {
  std::vector<RealField> sens;
  const int n = static_cast<int>(images[0].cols());
  const ComplexField conj_object = object_spectrum.conjugate();
  for (std::size_t k = 0; k < images.size(); ++k) {
    ComplexField r = fft::forward_half(ratio(object_spectrum, fwd.otf[k], images[k], floor));
    sens.push_back(fft::inverse_half(r * conj_object, n));
  }
  return model.coefficient_gradient(fwd, sens, indices);
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double poisson_likelihood_kernel(const RealField& object, std::span<const ComplexField> otfs,
                                 std::span<const RealField> images, double floor) {
  check_inputs(object, otfs, images);
  return likelihood_from_spectrum(fft::forward_half(object), half_otfs(otfs, object.cols()), images, floor);
}

RealField em_update_kernel(const RealField& object, std::span<const ComplexField> otfs,
                           std::span<const RealField> images, double floor) {
  check_inputs(object, otfs, images);
  return em_step(object, half_otfs(otfs, object.cols()), images, floor);
}

double poisson_likelihood(const ZernikeVector& c, const RealField& object, const DiversityStack& stack, double floor) {
  stack.validate();
  DiversityModel model(stack.config, stack.diversity_z, c.indices());
  const auto fwd = model.forward(c, DiversityModel::OtfMode::Half);
  return poisson_likelihood_kernel(object, fwd.otf, clamp_images(stack.images, floor), floor);
}

std::vector<double> poisson_gradient(const ZernikeVector& c, const RealField& object, const DiversityStack& stack,
                                     std::span<const int> indices, double floor) {
  stack.validate();
  DiversityModel model(stack.config, stack.diversity_z, c.indices());
  const auto fwd = model.forward(c, DiversityModel::OtfMode::Half);
  const auto images = clamp_images(stack.images, floor);
  check_inputs(object, fwd.otf, images);
  return gradient_from(model, fwd, fft::forward_half(object), images, indices, floor);
}

std::vector<double> poisson_gradient(const ZernikeVector& c, const RealField& object, const DiversityStack& stack,
                                     double floor) {
  const auto idx = default_estimated_indices();
  return poisson_gradient(c, object, stack, idx, floor);
}

RealField object_update(const RealField& object, const ZernikeVector& c, const DiversityStack& stack, double floor) {
  stack.validate();
  DiversityModel model(stack.config, stack.diversity_z, c.indices());
  const auto fwd = model.forward(c, DiversityModel::OtfMode::Half);
  RealField next = em_update_kernel(object, fwd.otf, clamp_images(stack.images, floor), floor);
  const double total = next.sum();
  if (!(total > 0.0)) throw std::domain_error("object_update: object vanished");
  return next / total;
}

EstimationResult estimate_poisson(const DiversityStack& stack, const PoissonOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  opts.validate();
  stack.validate();
  const auto& idx = opts.estimated_indices;
  const std::size_t n_coeffs = idx.size();
  DiversityModel model(stack.config, stack.diversity_z, idx);
  const auto images = clamp_images(stack.images, opts.floor);
  const int n = stack.config.grid_size;

  double total_counts = 0.0;
  for (const auto& d : images) total_counts += d.sum();
  const double flux = total_counts / static_cast<double>(images.size());

  std::vector<double> coeffs(n_coeffs, opts.initial_coeff);
  if (opts.initial) {
    for (std::size_t i = 0; i < n_coeffs; ++i) {
      const int j = opts.estimated_indices[i];
      if (opts.initial->contains(j)) coeffs[i] = opts.initial->get(j);
    }
  }
  auto to_vector = [&](const std::vector<double>& v) {
    ZernikeVector z;
    for (std::size_t i = 0; i < n_coeffs; ++i) z.set(idx[i], v[i]);
    return z;
  };
  RealField object = RealField::Constant(n, n, 1.0 / (static_cast<double>(n) * n));

  EstimationResult result;
  result.estimator = "poisson";
  result.reason = "max_iterations";
  double step = opts.initial_step;
  int outer = 0;

  auto forward_at = [&](const std::vector<double>& v) { return model.forward(model.pupil_phase(to_vector(v)), DiversityModel::OtfMode::Half);
  };

  auto fwd = forward_at(coeffs);
  for (; outer <= opts.max_outer_iterations; ++outer) {
    // Object first: from the uniform start the coefficient gradient vanishes identically.
    for (int inner = 0; inner < opts.object_inner_iterations; ++inner) {
      object = em_step(object, fwd.otf, images, opts.floor);
    }
    object /= object.sum();
    ComplexField object_spectrum = fft::forward_half(object);
    const auto grad = gradient_from(model, fwd, object_spectrum, images, idx, opts.floor);
    const double gnorm = norm(grad);
    const double scaled = likelihood_from_spectrum(object_spectrum * flux, fwd.otf, images, opts.floor);
    result.trace.push_back({outer, scaled, gnorm, to_vector(coeffs)});
    if (gnorm / total_counts < opts.gradient_norm_tol) {
      result.converged = true;
      result.reason = "gradient_norm";
      break;
    }
    if (outer == opts.max_outer_iterations) break;

    // Coefficient step: bracket then golden-section along the unit gradient direction.
    std::vector<double> dir(n_coeffs);
    for (std::size_t i = 0; i < n_coeffs; ++i) dir[i] = grad[i] / gnorm;
    int evaluations = 0;
    auto phi = [&](double t) {
      ++evaluations;
      std::vector<double> trial(n_coeffs);
      for (std::size_t i = 0; i < n_coeffs; ++i) trial[i] = coeffs[i] + t * dir[i];
      auto trial_fwd = forward_at(trial);
      return likelihood_from_spectrum(object_spectrum, trial_fwd.otf, images, opts.floor);
    };
    const double f0 = likelihood_from_spectrum(object_spectrum, fwd.otf, images, opts.floor);
    double a = 0.0, fa = f0;
    double b = step, fb = phi(b);
    double c = 0.0, fc = 0.0;
    bool bracketed = false;
    if (fb > f0) {
      while (evaluations < opts.line_search_evaluations) {
        const double t = 2.0 * b;
        const double ft = phi(t);
        if (ft > fb) {
          a = b, fa = fb, b = t, fb = ft;
        } else {
          c = t, fc = ft;
          bracketed = true;
          break;
        }
      }
    } else {
      c = b, fc = fb;
      while (evaluations < opts.line_search_evaluations) {
        const double t = 0.5 * c;
        const double ft = phi(t);
        if (ft > f0) {
          b = t, fb = ft;
          bracketed = true;
          break;
        }
        c = t, fc = ft;
      }
      if (!bracketed) b = 0.0, fb = f0;
    }
    if (bracketed) {
      constexpr double kGolden = 0.3819660112501051;
      while (evaluations < opts.line_search_evaluations && (c - a) > 1e-3 * b) {
        const bool right = (c - b) > (b - a);
        const double t = right ? b + kGolden * (c - b) : b - kGolden * (b - a);
        const double ft = phi(t);
        if (ft > fb) {
          if (right) a = b, fa = fb;
          else c = b, fc = fb;
          b = t, fb = ft;
        } else {
          if (right) c = t, fc = ft;
          else a = t, fa = ft;
        }
      }
    }
    (void)fa;
    (void)fc;
    if (!(fb > f0)) {
      result.reason = "line_search_failed";
      break;
    }
    for (std::size_t i = 0; i < n_coeffs; ++i) coeffs[i] += b * dir[i];
    step = b;
    fwd = forward_at(coeffs);

  }

  result.iterations = outer;
  result.coeffs = to_vector(coeffs);
  result.object_estimate = object * flux;
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace phasediv
