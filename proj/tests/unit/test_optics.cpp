#include "phasediv/estimation.hpp"
#include "phasediv/optics.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace phasediv;
using phasediv::testing::optics;

TEST(OpticalConfig, FrequencyStepIsReciprocalFieldOfView) {
  OpticalConfig o = optics(32);
  EXPECT_DOUBLE_EQ(FrequencyGrid(o).step(), 1.0 / 3.2);
  EXPECT_DOUBLE_EQ(FrequencyGrid(o).unit_disk_radius(), 2.0);
}

TEST(OpticalConfig, RejectsInvalidGeometry) {
  OpticalConfig o = optics(64);
  o.grid_size = 30;
  EXPECT_THROW(o.validate(), ConfigError);
  o = optics(33);
  EXPECT_THROW(o.validate(), ConfigError);
  o = optics(64);
  o.na = 1.5;
  EXPECT_THROW(o.validate(), ConfigError);
  o = optics(64);
  o.pixel_pitch = 0.3;  // pupil radius 2 cycles/um exceeds the 1.67 band edge
  EXPECT_THROW(o.validate(), ConfigError);
}

TEST(OpticalConfig, NyquistAndDownscale) {
  OpticalConfig o = optics(256);
  EXPECT_TRUE(o.nyquist_sampled());  // 0.1 <= 0.6 / 4.8
  const OpticalConfig d = o.downscaled();
  EXPECT_EQ(d.grid_size, 128);
  EXPECT_DOUBLE_EQ(d.pixel_pitch, 0.2);
  EXPECT_FALSE(d.nyquist_sampled());
  EXPECT_THROW(downscale_image(RealField::Ones(128, 128), d), ConfigError);
}

TEST(Noll, IndexToOrders) {
  const std::pair<int, NollMode> table[] = {{1, {0, 0}},  {2, {1, 1}},   {3, {1, -1}}, {4, {2, 0}},
                                            {5, {2, -2}}, {6, {2, 2}},   {7, {3, -1}}, {8, {3, 1}},
                                            {11, {4, 0}}, {15, {4, -4}}, {22, {6, 0}}, {45, {8, -8}}};
  for (const auto& [j, nm] : table) {
    EXPECT_EQ(noll_to_nm(j).n, nm.n) << j;
    EXPECT_EQ(noll_to_nm(j).m, nm.m) << j;
  }
  EXPECT_THROW(noll_to_nm(0), ConfigError);
}

TEST(Zernike, ClosedFormValues) {
  const double rho = 0.7, theta = 0.3;
  EXPECT_NEAR(zernike_value(4, rho, theta), std::sqrt(3.0) * (2 * rho * rho - 1), 1e-14);
  EXPECT_NEAR(zernike_value(6, rho, theta), std::sqrt(6.0) * rho * rho * std::cos(2 * theta), 1e-14);
  EXPECT_NEAR(zernike_value(11, rho, theta), std::sqrt(5.0) * (6 * std::pow(rho, 4) - 6 * rho * rho + 1), 1e-14);
  EXPECT_NEAR(zernike_value(7, rho, theta), std::sqrt(8.0) * (3 * std::pow(rho, 3) - 2 * rho) * std::sin(theta),
              1e-14);
}

TEST(Zernike, DiscreteOrthonormalityOnInscribedPupil) {
  OpticalConfig o = optics(512);
  o.pixel_pitch = 0.24;
  const FrequencyGrid grid(o);
  std::vector<std::vector<double>> z;
  for (int j = 4; j <= 45; ++j) z.push_back(zernike_pupil(j, grid));
  for (std::size_t a = 0; a < z.size(); ++a) {
    double aa = 0.0;
    for (double v : z[a]) aa += v * v;
    EXPECT_NEAR(aa / grid.pupil_count(), 1.0, 5e-3);
    for (std::size_t b = a + 1; b < z.size(); ++b) {
      double ab = 0.0, bb = 0.0;
      for (std::size_t i = 0; i < z[a].size(); ++i) ab += z[a][i] * z[b][i], bb += z[b][i] * z[b][i];
      EXPECT_LT(std::abs(ab) / std::sqrt(aa * bb), 5e-3) << a + 4 << "," << b + 4;
    }
  }
}

TEST(Zernike, VectorRejectsPistonAndTilt) {
  ZernikeVector c;
  EXPECT_THROW(c.set(3, 1.0), ConfigError);
  EXPECT_THROW(c.set(5, std::nan("")), ConfigError);
  c.set(5, 1.0);
  c.set(9, -2.0);
  EXPECT_EQ(c.get(6), 0.0);
  const std::vector<int> keep = {9};
  EXPECT_EQ(c.restricted_to(keep).indices(), keep);
  EXPECT_EQ((c - c).get(5), 0.0);
  EXPECT_EQ((2.0 * c).get(9), -4.0);
}

TEST(Wrms, SingleModeAndRweProperties) {
  const FrequencyGrid grid(optics(256));
  const auto norms = relative_zernike_norms(4, 45, grid);
  ZernikeVector c;
  c.set(4, 2.0 * std::numbers::pi);
  EXPECT_NEAR(wrms(c, norms), 1.0 / std::sqrt(norms.at(4)), 1e-12);
  EXPECT_NEAR(norms.at(4), 1.0, 2e-2);

  const auto a = phasediv::testing::random_coeffs(noll_range(4, 15), 1.0, 1);
  const auto b = phasediv::testing::random_coeffs(noll_range(4, 15), 1.0, 2);
  EXPECT_DOUBLE_EQ(rwe(a, a, norms), 0.0);
  EXPECT_DOUBLE_EQ(rwe(a, b, norms), rwe(b, a, norms));
  EXPECT_NEAR(rwe(a, ZernikeVector{}, norms), wrms(a, norms), 1e-15);
  ZernikeVector far;
  far.set(60, 1.0);
  EXPECT_THROW(wrms(far, norms), std::out_of_range);
}

TEST(Defocus, ExactFormulaInsidePupil) {
  const OpticalConfig o = optics(64);
  const FrequencyGrid grid(o);
  const double z = 1.8;
  const RealField phase = defocus_phase(z, grid);
  const double k = 2.0 * std::numbers::pi * o.medium_index / o.wavelength;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const double u = grid.u_norm()(r, c);
      const double expect = grid.inside(r, c) ? z * k * std::sqrt(1 - std::pow(o.wavelength * u / o.medium_index, 2))
                                              : 0.0;
      EXPECT_NEAR(phase(r, c), expect, 1e-12);
    }
  }
}

TEST(Psf, ParsevalAndPistonInvariance) {
  const FrequencyGrid grid(optics(128));
  const auto c = phasediv::testing::random_coeffs(noll_range(4, 21), 1.5, 4);
  const RealField phase = phase_from_coeffs(c, grid);
  const Psf psf = psf_from_phase(phase, defocus_phase(1.8, grid), grid);
  EXPECT_NEAR(psf.total(), grid.pupil_count(), 1e-10 * grid.pupil_count());
  EXPECT_GE(psf.intensities.minCoeff(), 0.0);
  EXPECT_NEAR(psf.normalized().total(), 1.0, 1e-14);

  const RealField shifted = phase + 0.7 * grid.inside_pupil();
  const Psf same = psf_from_phase(shifted, defocus_phase(1.8, grid), grid);
  EXPECT_LT((same.intensities - psf.intensities).abs().maxCoeff(), 1e-10 * psf.intensities.maxCoeff());

  const auto compact = phase_pupil(c, grid);
  std::vector<double> with_defocus(compact.size());
  const auto dz = defocus_pupil(1.8, grid);
  for (std::size_t i = 0; i < compact.size(); ++i) with_defocus[i] = compact[i] + dz[i];
  const Psf unit = unit_psf_from_pupil_phase(with_defocus, grid);
  EXPECT_LT((unit.intensities - psf.normalized().intensities).abs().maxCoeff(), 1e-14);
}

TEST(Psf, UnaberratedPsfIsCentrosymmetricPeakAtOrigin) {
  const FrequencyGrid grid(optics(64));
  const Psf psf = psf_from_phase(RealField::Zero(64, 64), RealField::Zero(64, 64), grid);
  Eigen::Index r, c;
  psf.intensities.maxCoeff(&r, &c);
  EXPECT_EQ(r, 0);
  EXPECT_EQ(c, 0);
  EXPECT_NEAR(psf.intensities(1, 3), psf.intensities(63, 61), 1e-12);
}

TEST(Downscale, BlockSumsAndMeans) {
  RealField x(4, 4);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16;
  const RealField s = downscale_sum(x);
  const RealField m = downscale_mean(x);
  EXPECT_EQ(s(0, 0), 14);
  EXPECT_EQ(s(1, 1), 54);
  EXPECT_EQ(m(0, 1), 5.5);
  EXPECT_DOUBLE_EQ(s.sum(), x.sum());
  EXPECT_THROW(downscale_sum(RealField::Ones(3, 4)), ConfigError);
}
