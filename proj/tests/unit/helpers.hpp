#pragma once

#include "phasediv/estimation.hpp"
#include "phasediv/simulate.hpp"

#include <random>

namespace phasediv::testing {

inline OpticalConfig optics(int n) {
  OpticalConfig o;
  o.grid_size = n;
  return o;
}

/// Small simulated stack: dense cells, low additive noise unless `noise` is given.
inline DiversityStack small_stack(int n, double wrms, std::uint64_t seed,
                                  const NoiseParams& noise = NoiseParams::low_additive(500.0), int support = 0) {
  const OpticalConfig o = optics(n);
  Rng rng(seed);
  const AberrationSample truth = sample_aberration(wrms, rng, FrequencyGrid(o));
  ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 2 * n, seed);
  spec.support_size = support;
  return simulate_stack(spec, truth, default_diversity(o), noise, o, rng);
}

inline RealField random_field(int rows, int cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RealField f(rows, cols);
  for (auto& v : f.reshaped()) v = u(rng);
  return f;
}

inline ZernikeVector random_coeffs(std::span<const int> indices, double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  ZernikeVector c;
  for (int j : indices) c.set(j, u(rng));
  return c;
}

}  // namespace phasediv::testing
