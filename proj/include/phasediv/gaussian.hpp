#pragma once

#include "phasediv/estimation.hpp"
#include "phasediv/stack.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace phasediv {

struct GaussianOptions {
  std::vector<int> estimated_indices = default_estimated_indices();
  int max_iterations = 200;
  /// Stop when |grad| < gradient_norm_tol * |grad at the start|.
  double gradient_norm_tol = 1e-6;
  double object_regularization = 1e-10;
  double initial_coeff = 1e-10;
  /// Starting point; overrides initial_coeff for the indices it contains.
  std::optional<ZernikeVector> initial;
  /// Stop when an accepted step moves the coefficients by less than this (radians).
  double step_tol = 1e-9;
  double armijo = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 30;
  bool subtract_mean = true;
  /// Width of the raised-cosine edge taper applied to the (mean-removed) images, as a
  /// fraction of the image side. 0 disables it.
  double edge_taper = 0.0;

  void validate() const;
};

/// Fourier-domain reduced objective -(1/N^2) sum_u [sum_k |D_k|^2 - |sum_k D_k S_k^*|^2 / (sum_k |S_k|^2 + eps)].
/// Spectra are unnormalized DFTs of the images and of the unit-sum PSFs.
double gaussian_reduced_value(std::span<const ComplexField> data_spectra, std::span<const ComplexField> otfs,
                              double eps);

/// sum_k D_k S_k^* / (sum_k |S_k|^2 + eps).
ComplexField gaussian_object_spectrum(std::span<const ComplexField> data_spectra,
                                      std::span<const ComplexField> otfs, double eps);

/// Separable raised-cosine edge taper; `fraction` of the side length ramps at each edge.
RealField edge_taper_window(int n, double fraction);

/// Data spectra as used by the estimator (means removed when opts.subtract_mean).
std::vector<ComplexField> gaussian_data_spectra(const DiversityStack& stack, const GaussianOptions& opts);

double reduced_objective(const ZernikeVector& c, const DiversityStack& stack, const GaussianOptions& opts);

/// Closed-form maximum-likelihood object for coefficients c. The DC term is taken from the
/// raw image means so the result is on the data's intensity scale.
RealField closed_form_object(const ZernikeVector& c, const DiversityStack& stack, const GaussianOptions& opts);

/// d(reduced_objective)/dc_j for each j in `indices` (defaults to opts.estimated_indices).
std::vector<double> gaussian_gradient(const ZernikeVector& c, const DiversityStack& stack,
                                      const GaussianOptions& opts);
std::vector<double> gaussian_gradient(const ZernikeVector& c, const DiversityStack& stack,
                                      const GaussianOptions& opts, std::span<const int> indices);

/// Gauss-Newton pseudo-Hessian of the residual energy (-N^2 times the objective) over the
/// estimated indices; symmetric positive semidefinite.
Eigen::MatrixXd gaussian_pseudo_hessian(const ZernikeVector& c, const DiversityStack& stack,
                                        const GaussianOptions& opts);

EstimationResult estimate_gaussian(const DiversityStack& stack, const GaussianOptions& opts = {});

}  // namespace phasediv
