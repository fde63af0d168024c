#include "phasediv/diversity_model.hpp"

#include "phasediv/fft.hpp"

#include <algorithm>
#include <stdexcept>

namespace phasediv {

DiversityModel::DiversityModel(const OpticalConfig& config, std::span<const double> diversity_z,
                               std::vector<int> indices)
    : grid_(config), indices_(std::move(indices)) {
  if (diversity_z.empty()) throw ConfigError("DiversityModel: no diversity planes");
  for (int j : indices_) {
    if (j < 1) throw ConfigError("DiversityModel: Noll indices must be >= 1");
    basis_.push_back(zernike_pupil(j, grid_));
  }
  for (double z : diversity_z) diversity_.push_back(defocus_pupil(z, grid_));
}

std::vector<double> DiversityModel::basis(int j) const {
  auto it = std::find(indices_.begin(), indices_.end(), j);
  if (it != indices_.end()) return basis_[static_cast<std::size_t>(it - indices_.begin())];
  return zernike_pupil(j, grid_);
}

std::vector<double> DiversityModel::pupil_phase(const ZernikeVector& c, double extra) const {
  std::vector<double> phase(grid_.pupil_count(), extra);
  for (const auto& [j, cj] : c) {
    if (cj == 0.0) continue;
    auto it = std::find(indices_.begin(), indices_.end(), j);
    if (it != indices_.end()) {
      const auto& z = basis_[static_cast<std::size_t>(it - indices_.begin())];
      for (std::size_t i = 0; i < phase.size(); ++i) phase[i] += cj * z[i];
    } else {
      const auto z = zernike_pupil(j, grid_);
      for (std::size_t i = 0; i < phase.size(); ++i) phase[i] += cj * z[i];
    }
  }
  return phase;
}

DiversityModel::Forward DiversityModel::forward(const ZernikeVector& c, OtfMode mode) const {
  return forward(pupil_phase(c), mode);
}

DiversityModel::Forward DiversityModel::forward(std::span<const double> aberration_pupil_phase,
                                                OtfMode mode) const {
  const int n = size();
  const auto idx = grid_.pupil_indices();
  if (aberration_pupil_phase.size() != idx.size()) throw std::invalid_argument("forward: phase size mismatch");
  const double scale = 1.0 / (static_cast<double>(n) * n * grid_.pupil_count());

  Forward fwd;
  for (const auto& theta : diversity_) {
    std::vector<std::complex<double>> pupil(idx.size());
    ComplexField h = ComplexField::Zero(n, n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      pupil[i] = std::polar(1.0, aberration_pupil_phase[i] + theta[i]);
      h.data()[idx[i]] = pupil[i];
    }
    fft::forward_inplace(h);
    RealField s = h.abs2() * scale;
    if (mode == OtfMode::Full) fwd.otf.push_back(fft::forward(s));
    if (mode == OtfMode::Half) fwd.otf.push_back(fft::forward_half(s));
    fwd.psf.push_back(std::move(s));
    fwd.coherent.push_back(std::move(h));
    fwd.pupil.push_back(std::move(pupil));
  }
  return fwd;
}

std::vector<double> DiversityModel::coefficient_gradient(const Forward& fwd,
                                                         std::span<const RealField> sensitivity,
                                                         std::span<const int> indices) const {
  const int n = size();
  const auto idx = grid_.pupil_indices();
  if (static_cast<int>(sensitivity.size()) != diversity_count()) {
    throw std::invalid_argument("coefficient_gradient: one sensitivity field per image required");
  }
  std::vector<double> im(idx.size(), 0.0);
  for (int k = 0; k < diversity_count(); ++k) {
    ComplexField t = sensitivity[k].cast<std::complex<double>>() * fwd.coherent[k].conjugate();
    fft::forward_inplace(t);
    const auto& pupil = fwd.pupil[k];
    for (std::size_t i = 0; i < idx.size(); ++i) im[i] += std::imag(pupil[i] * t.data()[idx[i]]);
  }
  const double scale = -2.0 / (static_cast<double>(n) * n * grid_.pupil_count());
  std::vector<double> grad;
  grad.reserve(indices.size());
  for (int j : indices) {
    const auto z = basis(j);
    double sum = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) sum += z[i] * im[i];
    grad.push_back(scale * sum);
  }
  return grad;
}

RealField DiversityModel::psf_derivative(const Forward& fwd, int k, int j) const {
  const int n = size();
  const auto idx = grid_.pupil_indices();
  const auto z = basis(j);
  ComplexField p = ComplexField::Zero(n, n);
  const auto& pupil = fwd.pupil[k];
  for (std::size_t i = 0; i < idx.size(); ++i) p.data()[idx[i]] = std::complex<double>(0.0, z[i]) * pupil[i];
  fft::forward_inplace(p);
  const double scale = 2.0 / (static_cast<double>(n) * n * grid_.pupil_count());
  return (fwd.coherent[k].conjugate() * p).real() * scale;
}

}  // namespace phasediv
