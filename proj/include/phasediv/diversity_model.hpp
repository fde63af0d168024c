#pragma once

#include "phasediv/field.hpp"
#include "phasediv/optics.hpp"
#include "phasediv/stack.hpp"

#include <complex>
#include <span>
#include <vector>

namespace phasediv {

/// Forward optical model shared by the estimators: maps a coefficient vector
/// to the K unit-sum diversity PSFs, their OTFs, and coefficient derivatives.
class DiversityModel {
 public:
  DiversityModel(const OpticalConfig& config, std::span<const double> diversity_z,
                 std::vector<int> indices);

  const FrequencyGrid& grid() const { return grid_; }
  const std::vector<int>& indices() const { return indices_; }
  int diversity_count() const { return static_cast<int>(diversity_.size()); }
  int size() const { return grid_.size(); }

  /// Which OTFs forward() computes: none, full DFTs, or half spectra (fft::forward_half).
  enum class OtfMode { None, Full, Half };

  struct Forward {
    std::vector<ComplexField> coherent;  // h_k = DFT(H_k)
    std::vector<RealField> psf;          // s_k, unit sum
    std::vector<ComplexField> otf;       // S_k = DFT(s_k), full or half spectrum per OtfMode
    std::vector<std::vector<std::complex<double>>> pupil;  // H_k on pupil samples
  };

  /// Aberration phase on the pupil samples: sum over all entries of c plus `extra`
  /// (a constant added to every sample, used for piston checks).
  std::vector<double> pupil_phase(const ZernikeVector& c, double extra = 0.0) const;

  Forward forward(std::span<const double> aberration_pupil_phase, OtfMode mode = OtfMode::Full) const;
  Forward forward(const ZernikeVector& c, OtfMode mode = OtfMode::Full) const;

  /// Chain rule through the PSFs: given per-image sensitivities b_k(x) = dL/ds_k(x),
  /// returns dL/dc_j for each j in `indices` (may include j < 4).
  std::vector<double> coefficient_gradient(const Forward& fwd, std::span<const RealField> sensitivity,
                                           std::span<const int> indices) const;
  std::vector<double> coefficient_gradient(const Forward& fwd, std::span<const RealField> sensitivity) const {
    return coefficient_gradient(fwd, sensitivity, indices_);
  }

  /// ds_k / dc_j as a real field.
  RealField psf_derivative(const Forward& fwd, int k, int j) const;

  /// Z_j on pupil samples (cached for the model's indices, computed otherwise).
  std::vector<double> basis(int j) const;

 private:
  FrequencyGrid grid_;
  std::vector<int> indices_;
  std::vector<std::vector<double>> basis_;      // per model index
  std::vector<std::vector<double>> diversity_;  // theta_k on pupil samples
};

}  // namespace phasediv
