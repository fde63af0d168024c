#include "phasediv/optics.hpp"

#include "phasediv/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace phasediv {

void OpticalConfig::validate() const {
  if (!(na > 0.0)) throw ConfigError("optics: na must be positive");
  if (!(wavelength > 0.0)) throw ConfigError("optics: wavelength must be positive");
  if (!(medium_index >= 1.0)) throw ConfigError("optics: medium_index must be >= 1");
  if (na > medium_index) throw ConfigError("optics: na must not exceed medium_index");
  if (!(pixel_pitch > 0.0)) throw ConfigError("optics: pixel_pitch must be positive");
  if (grid_size < 32 || grid_size % 2 != 0) {
    throw ConfigError("optics: grid_size must be even and >= 32, got " + std::to_string(grid_size));
  }
  if (na / wavelength >= 0.5 / pixel_pitch) {
    throw ConfigError("optics: pupil does not fit inside the sampled frequency band");
  }
}

bool OpticalConfig::nyquist_sampled() const { return pixel_pitch <= wavelength / (4.0 * na) + 1e-15; }

OpticalConfig OpticalConfig::downscaled() const {
  OpticalConfig out = *this;
  out.pixel_pitch *= 2.0;
  out.grid_size /= 2;
  return out;
}

OpticalConfig OpticalConfig::with_grid_size(int n) const {
  OpticalConfig out = *this;
  out.grid_size = n;
  return out;
}

FrequencyGrid::FrequencyGrid(const OpticalConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.grid_size;
  step_ = 1.0 / (n * config_.pixel_pitch);
  radius_ = config_.na / config_.wavelength;
  u_norm_.resize(n, n);
  mask_.setZero(n, n);
  for (int r = 0; r < n; ++r) {
    const int fy = r < n / 2 ? r : r - n;
    for (int c = 0; c < n; ++c) {
      const int fx = c < n / 2 ? c : c - n;
      const double uy = fy * step_;
      const double ux = fx * step_;
      const double u = std::hypot(ux, uy);
      u_norm_(r, c) = u;
      if (u <= radius_) {
        mask_(r, c) = 1.0;
        pupil_.push_back(r * n + c);
        rho_.push_back(u / radius_);
        theta_.push_back(std::atan2(uy, ux));
      }
    }
  }
}

RealField FrequencyGrid::scatter(std::span<const double> pupil_values) const {
  if (pupil_values.size() != pupil_.size()) throw std::invalid_argument("scatter: size mismatch");
  RealField out = RealField::Zero(size(), size());
  for (std::size_t i = 0; i < pupil_.size(); ++i) out.data()[pupil_[i]] = pupil_values[i];
  return out;
}

FrequencyGrid make_frequency_grid(const OpticalConfig& config) { return FrequencyGrid(config); }

// --- ZernikeVector ----------------------------------------------------------

void ZernikeVector::set(int j, double value) {
  if (j < kMinIndex) throw ConfigError("ZernikeVector: Noll index " + std::to_string(j) + " < 4");
  if (!std::isfinite(value)) throw ConfigError("ZernikeVector: non-finite coefficient");
  coeffs_[j] = value;
}

double ZernikeVector::get(int j) const {
  auto it = coeffs_.find(j);
  return it == coeffs_.end() ? 0.0 : it->second;
}

std::vector<int> ZernikeVector::indices() const {
  std::vector<int> out;
  out.reserve(coeffs_.size());
  for (const auto& [j, v] : coeffs_) out.push_back(j);
  return out;
}

ZernikeVector ZernikeVector::restricted_to(std::span<const int> indices) const {
  ZernikeVector out;
  for (int j : indices) {
    if (auto it = coeffs_.find(j); it != coeffs_.end()) out.coeffs_[j] = it->second;
  }
  return out;
}

ZernikeVector& ZernikeVector::operator+=(const ZernikeVector& other) {
  for (const auto& [j, v] : other) coeffs_[j] += v;
  return *this;
}

ZernikeVector& ZernikeVector::operator-=(const ZernikeVector& other) {
  for (const auto& [j, v] : other) coeffs_[j] -= v;
  return *this;
}

ZernikeVector& ZernikeVector::operator*=(double s) {
  for (auto& [j, v] : coeffs_) v *= s;
  return *this;
}

ZernikeVector operator+(ZernikeVector a, const ZernikeVector& b) { return a += b; }
ZernikeVector operator-(ZernikeVector a, const ZernikeVector& b) { return a -= b; }
ZernikeVector operator*(double s, ZernikeVector a) { return a *= s; }

// --- Zernike basis ----------------------------------------------------------

NollMode noll_to_nm(int j) {
  if (j < 1) throw ConfigError("noll_to_nm: index must be >= 1");
  int n = 0;
  while ((n + 1) * (n + 2) / 2 < j) ++n;
  const int p = j - n * (n + 1) / 2;  // 1-based position within order n
  const int parity = n % 2;
  int m = 2 * ((p + parity) / 2) - parity;
  if (m != 0 && j % 2 == 1) m = -m;
  return {n, m};
}

namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double radial(int n, int m, double rho) {
  double sum = 0.0;
  for (int s = 0; s <= (n - m) / 2; ++s) {
    const double coeff = ((s % 2 == 0) ? 1.0 : -1.0) * factorial(n - s) /
                         (factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s));
    sum += coeff * std::pow(rho, n - 2 * s);
  }
  return sum;
}

}  // namespace

double zernike_value(int j, double rho, double theta) {
  const auto [n, m] = noll_to_nm(j);
  const int am = std::abs(m);
  const double r = radial(n, am, rho);
  if (m == 0) return std::sqrt(n + 1.0) * r;
  const double norm = std::sqrt(2.0 * (n + 1.0));
  return m > 0 ? norm * r * std::cos(am * theta) : norm * r * std::sin(am * theta);
}

std::vector<double> zernike_pupil(int j, const FrequencyGrid& grid) {
  const auto rho = grid.pupil_rho();
  const auto theta = grid.pupil_theta();
  std::vector<double> out(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) out[i] = zernike_value(j, rho[i], theta[i]);
  return out;
}

RealField zernike_eval(int j, const FrequencyGrid& grid) { return grid.scatter(zernike_pupil(j, grid)); }

double zernike_norm(int j, const FrequencyGrid& grid) {
  double sum = 0.0;
  for (double z : zernike_pupil(j, grid)) sum += z * z;
  return sum;
}

ZernikeNorms relative_zernike_norms(std::span<const int> indices, const FrequencyGrid& grid) {
  const double area = grid.pupil_count();
  ZernikeNorms out;
  for (int j : indices) out[j] = zernike_norm(j, grid) / area;
  return out;
}

ZernikeNorms relative_zernike_norms(int first, int last, const FrequencyGrid& grid) {
  std::vector<int> idx;
  for (int j = first; j <= last; ++j) idx.push_back(j);
  return relative_zernike_norms(idx, grid);
}

std::vector<double> phase_pupil(const ZernikeVector& c, const FrequencyGrid& grid) {
  std::vector<double> phase(grid.pupil_count(), 0.0);
  for (const auto& [j, cj] : c) {
    if (cj == 0.0) continue;
    const auto z = zernike_pupil(j, grid);
    for (std::size_t i = 0; i < phase.size(); ++i) phase[i] += cj * z[i];
  }
  return phase;
}

RealField phase_from_coeffs(const ZernikeVector& c, const FrequencyGrid& grid) {
  return grid.scatter(phase_pupil(c, grid));
}

std::vector<double> defocus_pupil(double z, const FrequencyGrid& grid) {
  const auto& cfg = grid.config();
  const double k = 2.0 * std::numbers::pi * cfg.medium_index / cfg.wavelength;
  std::vector<double> out(grid.pupil_count());
  const auto idx = grid.pupil_indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double s = cfg.wavelength * grid.u_norm().data()[idx[i]] / cfg.medium_index;
    const double arg = 1.0 - s * s;
    if (arg < 0.0) throw ConfigError("defocus_phase: evanescent frequencies inside the pupil");
    out[i] = z * k * std::sqrt(arg);
  }
  return out;
}

RealField defocus_phase(double z, const FrequencyGrid& grid) { return grid.scatter(defocus_pupil(z, grid)); }

// --- PSF --------------------------------------------------------------------

Psf Psf::normalized() const {
  const double t = total();
  if (!(t > 0.0)) throw std::domain_error("Psf::normalized: zero energy");
  return Psf{intensities / t};
}

namespace {

Psf psf_from_compact(std::span<const double> pupil_phase, const FrequencyGrid& grid) {
  const int n = grid.size();
  ComplexField field = ComplexField::Zero(n, n);
  const auto idx = grid.pupil_indices();
  for (std::size_t i = 0; i < idx.size(); ++i) field.data()[idx[i]] = std::polar(1.0, pupil_phase[i]);
  fft::forward_inplace(field);
  RealField s = field.abs2() / (static_cast<double>(n) * n);
  return Psf{s.max(0.0)};
}

}  // namespace

Psf psf_from_phase(const RealField& aberration_phase, const RealField& diversity_phase,
                   const FrequencyGrid& grid) {
  const int n = grid.size();
  if (aberration_phase.rows() != n || aberration_phase.cols() != n || diversity_phase.rows() != n ||
      diversity_phase.cols() != n) {
    throw std::invalid_argument("psf_from_phase: field shape does not match grid");
  }
  std::vector<double> phase(grid.pupil_count());
  const auto idx = grid.pupil_indices();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    phase[i] = aberration_phase.data()[idx[i]] + diversity_phase.data()[idx[i]];
  }
  return psf_from_compact(phase, grid);
}

Psf unit_psf_from_pupil_phase(std::span<const double> pupil_phase, const FrequencyGrid& grid) {
  Psf p = psf_from_compact(pupil_phase, grid);
  p.intensities /= static_cast<double>(grid.pupil_count());
  return p;
}

// --- metrics ----------------------------------------------------------------

double wrms(const ZernikeVector& c, const ZernikeNorms& norms) {
  double sum = 0.0;
  for (const auto& [j, cj] : c) {
    auto it = norms.find(j);
    if (it == norms.end()) throw std::out_of_range("wrms: no norm for Noll index " + std::to_string(j));
    sum += cj * cj / it->second;
  }
  return std::sqrt(sum) / (2.0 * std::numbers::pi);
}

double rwe(const ZernikeVector& estimated, const ZernikeVector& truth, const ZernikeNorms& norms) {
  return wrms(estimated - truth, norms);
}

RealField downscale_mean(const RealField& image) { return downscale_sum(image) / 4.0; }

RealField downscale_sum(const RealField& image) {
  if (image.rows() % 2 != 0 || image.cols() % 2 != 0) {
    throw ConfigError("downscale: image dimensions must be even");
  }
  const Eigen::Index rows = image.rows() / 2;
  const Eigen::Index cols = image.cols() / 2;
  RealField out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = image(2 * r, 2 * c) + image(2 * r, 2 * c + 1) + image(2 * r + 1, 2 * c) +
                  image(2 * r + 1, 2 * c + 1);
    }
  }
  return out;
}

RealField downscale_image(const RealField& image, const OpticalConfig& source) {
  if (!source.nyquist_sampled()) {
    throw ConfigError("downscale: source sampling is coarser than Nyquist; downscaling would alias");
  }
  return downscale_mean(image);
}

}  // namespace phasediv
