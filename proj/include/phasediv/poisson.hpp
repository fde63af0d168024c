#pragma once

#include "phasediv/estimation.hpp"
#include "phasediv/stack.hpp"

#include <optional>
#include <span>
#include <vector>

namespace phasediv {

struct PoissonOptions {
  std::vector<int> estimated_indices = default_estimated_indices();
  int max_outer_iterations = 100;
  /// Stop when |dL/dc| / (total counts) falls below this.
  double gradient_norm_tol = 1e-5;
  int object_inner_iterations = 20;
  double initial_coeff = 1e-10;
  /// Starting point; overrides initial_coeff for the indices it contains.
  std::optional<ZernikeVector> initial;
  double floor = 1e-8;
  /// Likelihood evaluations allowed per coefficient line search.
  int line_search_evaluations = 24;
  /// Initial line-search step along the unit gradient direction (radians).
  double initial_step = 0.1;

  void validate() const;
};

/// Images with values below `floor` raised to it.
std::vector<RealField> clamp_images(std::span<const RealField> images, double floor);

/// sum_k sum_x [d_k ln g_k - g_k], g_k = f (*) s_k cyclic, ln clamped at ln(floor).
double poisson_likelihood_kernel(const RealField& object, std::span<const ComplexField> otfs,
                                 std::span<const RealField> images, double floor);

/// One multiplicative EM step f * (1 / sum_k sum_x s_k) sum_k s~_k (*) (d_k / (f (*) s_k)), not normalized.
RealField em_update_kernel(const RealField& object, std::span<const ComplexField> otfs,
                           std::span<const RealField> images, double floor);

double poisson_likelihood(const ZernikeVector& c, const RealField& object, const DiversityStack& stack,
                          double floor = 1e-8);

/// dL/dc_j for j in `indices` (defaults to the standard j = 4..15 set).
std::vector<double> poisson_gradient(const ZernikeVector& c, const RealField& object, const DiversityStack& stack,
                                     std::span<const int> indices, double floor = 1e-8);
std::vector<double> poisson_gradient(const ZernikeVector& c, const RealField& object, const DiversityStack& stack,
                                     double floor = 1e-8);

/// EM object step followed by normalization to unit sum.
RealField object_update(const RealField& object, const ZernikeVector& c, const DiversityStack& stack,
                        double floor = 1e-8);

EstimationResult estimate_poisson(const DiversityStack& stack, const PoissonOptions& opts = {});

}  // namespace phasediv
