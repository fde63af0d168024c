#pragma once

#include "phasediv/field.hpp"
#include "phasediv/optics.hpp"

#include <string>
#include <vector>

namespace phasediv {

struct TraceEntry {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  ZernikeVector coeffs;
};

struct EstimationResult {
  std::string estimator;  // "gaussian" or "poisson"
  ZernikeVector coeffs;
  RealField object_estimate;
  std::vector<TraceEntry> trace;
  double wall_time = 0.0;  // seconds
  bool converged = false;
  std::string reason;
  int iterations = 0;
};

/// Noll indices first..last inclusive.
std::vector<int> noll_range(int first, int last);

/// Default estimated set: the twelve n = 2..4 modes, j = 4..15.
inline std::vector<int> default_estimated_indices() { return noll_range(4, 15); }

}  // namespace phasediv
