#pragma once

#include "phasediv/errors.hpp"
#include "phasediv/field.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace phasediv {

/// Imaging geometry. Lengths in micrometres.
struct OpticalConfig {
  double na = 1.2;
  double wavelength = 0.6;
  double medium_index = 1.33;
  double pixel_pitch = 0.1;
  int grid_size = 512;

  /// Throws ConfigError on violated invariants (positivity, na <= n,
  /// even grid_size >= 32, pupil inside the sampled band).
  void validate() const;

  /// pixel_pitch <= wavelength / (4 na): the incoherent OTF is fully sampled.
  bool nyquist_sampled() const;

  /// Same optics sampled by 2x2-binned pixels: doubled pitch, halved grid.
  OpticalConfig downscaled() const;

  OpticalConfig with_grid_size(int n) const;
};

/// DFT-ordered frequency coordinates of a square grid, DC at (0, 0).
class FrequencyGrid {
 public:
  explicit FrequencyGrid(const OpticalConfig& config);

  const OpticalConfig& config() const { return config_; }
  int size() const { return config_.grid_size; }
  /// Frequency step 1/(N * pitch), cycles/um.
  double step() const { return step_; }
  /// NA / wavelength, cycles/um.
  double unit_disk_radius() const { return radius_; }

  const RealField& u_norm() const { return u_norm_; }
  /// 1 inside the pupil support, 0 outside.
  const RealField& inside_pupil() const { return mask_; }
  bool inside(int row, int col) const { return mask_(row, col) != 0.0; }

  /// Flat row-major indices of the in-pupil samples.
  std::span<const int> pupil_indices() const { return pupil_; }
  int pupil_count() const { return static_cast<int>(pupil_.size()); }
  /// Normalized pupil polar coordinates of each in-pupil sample (rho in [0, 1]).
  std::span<const double> pupil_rho() const { return rho_; }
  std::span<const double> pupil_theta() const { return theta_; }

  /// Scatter compact in-pupil values into a full field, zero elsewhere.
  RealField scatter(std::span<const double> pupil_values) const;

 private:
  OpticalConfig config_;
  double step_;
  double radius_;
  RealField u_norm_;
  RealField mask_;
  std::vector<int> pupil_;
  std::vector<double> rho_;
  std::vector<double> theta_;
};

FrequencyGrid make_frequency_grid(const OpticalConfig& config);

/// Noll-indexed Zernike amplitudes in radians. Only j >= 4 is stored:
/// piston and tilts do not blur and leave both likelihoods unchanged.
class ZernikeVector {
 public:
  static constexpr int kMinIndex = 4;

  ZernikeVector() = default;

  /// Throws ConfigError for j < 4 or non-finite values.
  void set(int j, double value);
  /// Zero for indices that are not present.
  double get(int j) const;
  bool contains(int j) const { return coeffs_.contains(j); }
  bool empty() const { return coeffs_.empty(); }
  std::size_t size() const { return coeffs_.size(); }
  std::vector<int> indices() const;
  const std::map<int, double>& coeffs() const { return coeffs_; }

  /// Entries restricted to the given indices (missing entries stay missing).
  ZernikeVector restricted_to(std::span<const int> indices) const;

  ZernikeVector& operator+=(const ZernikeVector& other);
  ZernikeVector& operator-=(const ZernikeVector& other);
  ZernikeVector& operator*=(double s);

  auto begin() const { return coeffs_.begin(); }
  auto end() const { return coeffs_.end(); }

  friend bool operator==(const ZernikeVector&, const ZernikeVector&) = default;

 private:
  std::map<int, double> coeffs_;
};

ZernikeVector operator+(ZernikeVector a, const ZernikeVector& b);
ZernikeVector operator-(ZernikeVector a, const ZernikeVector& b);
ZernikeVector operator*(double s, ZernikeVector a);

struct NollMode {
  int n;
  int m;  // signed: negative for the sine terms
};

/// Radial order n and azimuthal frequency m of Noll index j >= 1.
NollMode noll_to_nm(int j);

/// Noll-normalized Z_j at normalized polar coordinates.
double zernike_value(int j, double rho, double theta);

/// Z_j on the pupil samples of the grid (compact, pupil_indices() order).
std::vector<double> zernike_pupil(int j, const FrequencyGrid& grid);

/// Z_j over the full grid on the rescaled coordinate (lambda/NA) u, zero outside the pupil.
RealField zernike_eval(int j, const FrequencyGrid& grid);

/// Sum over the pupil samples of Z_j^2 (sample-count area units; A_1 is the pupil sample count).
double zernike_norm(int j, const FrequencyGrid& grid);

/// Per-index norms A_j / A_1, the pupil-area-relative form used by wrms and rwe.
using ZernikeNorms = std::map<int, double>;
ZernikeNorms relative_zernike_norms(std::span<const int> indices, const FrequencyGrid& grid);
ZernikeNorms relative_zernike_norms(int first, int last, const FrequencyGrid& grid);

/// Sum_j c_j Z_j, zero outside the pupil.
RealField phase_from_coeffs(const ZernikeVector& c, const FrequencyGrid& grid);
std::vector<double> phase_pupil(const ZernikeVector& c, const FrequencyGrid& grid);

/// Exact defocus phase z * (2 pi n / lambda) sqrt(1 - (lambda |u| / n)^2), zero outside the pupil.
/// Throws ConfigError if the square-root argument is negative inside the pupil.
RealField defocus_phase(double z, const FrequencyGrid& grid);
std::vector<double> defocus_pupil(double z, const FrequencyGrid& grid);

/// Incoherent PSF. `intensities` sums to the pupil sample count (Parseval)
/// unless normalized().
struct Psf {
  RealField intensities;

  double total() const { return intensities.sum(); }
  /// Copy scaled to unit sum.
  Psf normalized() const;
};

/// |DFT(mask * exp(i (aberration + diversity)))|^2 / N^2. Negative round-off is clamped to 0.
Psf psf_from_phase(const RealField& aberration_phase, const RealField& diversity_phase,
                   const FrequencyGrid& grid);

/// Same, from compact pupil-sample phases; result is unit-sum.
Psf unit_psf_from_pupil_phase(std::span<const double> pupil_phase, const FrequencyGrid& grid);

/// Wavefront RMS in waves: (1 / 2 pi) sqrt(sum_j c_j^2 / A_j), with pupil-relative A_j.
/// Throws std::out_of_range when a present index has no norm.
double wrms(const ZernikeVector& c, const ZernikeNorms& norms);

/// Residual wavefront error in waves: wrms(estimated - truth), missing entries treated as 0.
double rwe(const ZernikeVector& estimated, const ZernikeVector& truth, const ZernikeNorms& norms);

/// 2x2 block reductions; throw ConfigError for odd dimensions.
RealField downscale_mean(const RealField& image);
RealField downscale_sum(const RealField& image);

/// Block-mean downscale that also enforces the Nyquist condition of the source config.
RealField downscale_image(const RealField& image, const OpticalConfig& source);

}  // namespace phasediv
