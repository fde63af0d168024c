#include "phasediv/simulate.hpp"
#include "phasediv/fft.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace phasediv;
using phasediv::testing::optics;

TEST(Object, DeterministicAndBounded) {
  for (auto kind : {ObjectKind::CellsDense, ObjectKind::CellsSparse, ObjectKind::Filaments, ObjectKind::Texture}) {
    const ObjectSpec spec = ObjectSpec::preset(kind, 128, 9);
    const RealField a = generate_object(spec);
    const RealField b = generate_object(spec);
    EXPECT_TRUE((a == b).all()) << to_string(kind);
    EXPECT_GE(a.minCoeff(), 0.0);
    EXPECT_LE(a.maxCoeff(), 1.0);
    EXPECT_GT(a.maxCoeff(), 0.0);
  }
  EXPECT_EQ(parse_object_kind("cells-sparse"), ObjectKind::CellsSparse);
  EXPECT_THROW(parse_object_kind("stars"), ConfigError);
}

TEST(Object, NoCellsGivesZeroField) {
  ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 64, 1);
  spec.cell_count = 0;
  EXPECT_EQ(generate_object(spec).abs().maxCoeff(), 0.0);
}

TEST(Object, SparseHasHigherPeakAtEqualTotal) {
  const RealField dense = generate_object(ObjectSpec::preset(ObjectKind::CellsDense, 256, 3));
  const RealField sparse = generate_object(ObjectSpec::preset(ObjectKind::CellsSparse, 256, 3));
  EXPECT_GT(sparse.maxCoeff() / sparse.sum(), dense.maxCoeff() / dense.sum());
}

TEST(Object, SupportConfinesContent) {
  ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 128, 5);
  spec.support_size = 32;
  const RealField f = generate_object(spec);
  EXPECT_GT(f.block(48, 48, 32, 32).sum(), 0.0);
  EXPECT_DOUBLE_EQ(f.sum(), f.block(48, 48, 32, 32).sum());
}

TEST(Aberration, BlockScalingAndCount) {
  const FrequencyGrid grid(optics(128));
  const auto norms = relative_zernike_norms(4, 45, grid);
  Rng rng(11);
  const AberrationSample s = sample_aberration(2.0, rng, grid);
  EXPECT_EQ(s.coeffs.size(), 42u);
  EXPECT_NEAR(wrms(s.coeffs.restricted_to(noll_range(4, 15)), norms), 2.0, 1e-6);
  EXPECT_NEAR(wrms(s.coeffs.restricted_to(noll_range(16, 45)), norms), 1.0, 1e-6);

  const AberrationSample zero = sample_aberration(0.0, rng, grid);
  for (const auto& [j, v] : zero.coeffs) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(sample_aberration(-1.0, rng, grid), ConfigError);
}

TEST(CropConvolution, DeltaPsfReturnsCentralCrop) {
  const RealField object = phasediv::testing::random_field(64, 64, 2);
  Psf delta{RealField::Zero(32, 32)};
  delta.intensities(0, 0) = 1.0;
  const RealField out = convolve_cropped(object, delta);
  EXPECT_LT((out - object.block(16, 16, 32, 32)).abs().maxCoeff(), 1e-12);
}

TEST(CropConvolution, MatchesDirectLinearConvolution) {
  const int n = 32, m = 64, off = (m - n) / 2;
  const RealField object = phasediv::testing::random_field(m, m, 3);
  const Psf psf{phasediv::testing::random_field(n, n, 4)};
  const RealField out = convolve_cropped(object, psf);
  for (int r = 0; r < n; r += 5) {
    for (int c = 0; c < n; c += 3) {
      double sum = 0.0;
      for (int pr = 0; pr < n; ++pr) {
        const int dy = pr < n / 2 ? pr : pr - n;
        for (int pc = 0; pc < n; ++pc) {
          const int dx = pc < n / 2 ? pc : pc - n;
          sum += psf.intensities(pr, pc) * object(off + r - dy, off + c - dx);
        }
      }
      EXPECT_NEAR(out(r, c), sum, 1e-10 * sum);
    }
  }
  EXPECT_THROW(convolve_cropped(RealField::Ones(48, 48), psf), ConfigError);
}

TEST(CropConvolution, AgreesWithCyclicForConfinedObject) {
  const OpticalConfig o = optics(64);
  const FrequencyGrid grid(o);
  ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 128, 6);
  spec.support_size = 16;
  const RealField canvas = generate_object(spec);
  const Psf psf = unit_psf_from_pupil_phase(phase_pupil(phasediv::testing::random_coeffs(noll_range(4, 11), 0.5, 1), grid), grid);
  const RealField cropped = convolve_cropped(canvas, psf);
  const RealField cyclic = fft::convolve(canvas.block(32, 32, 64, 64), psf.intensities);
  EXPECT_LT((cropped - cyclic).block(16, 16, 32, 32).abs().maxCoeff(), 1e-8 * cyclic.maxCoeff());
}

TEST(Noise, MomentsMatchModel) {
  const NoiseParams noise = NoiseParams::low_additive(40.0);
  Rng rng(21);
  const RealField d = apply_noise(RealField::Constant(100, 100, 3.0), noise, rng);
  const double mean = d.mean();
  const double var = (d - mean).square().sum() / (d.size() - 1.0);
  const double mu = 40.0, qe = noise.quantum_efficiency;
  EXPECT_LT(std::abs(mean - (qe * mu + noise.dark_mean)) / std::sqrt(var / d.size()), 4.0);
  const double expect_var = qe * qe * mu + noise.dark_mean + noise.read_sigma * noise.read_sigma;
  EXPECT_LT(std::abs(var - expect_var) / expect_var, 0.1);
}

TEST(Noise, PresetsAndNoiselessMode) {
  EXPECT_EQ(NoiseParams{}.dark_mean, 1.0);
  EXPECT_EQ(NoiseParams{}.read_sigma, 2.0);
  EXPECT_EQ(NoiseParams{}.photons_per_pixel, 500.0);
  EXPECT_EQ(NoiseParams::high_additive().dark_mean, 100.0);
  EXPECT_EQ(NoiseParams::high_additive().read_sigma, 20.0);
  const RealField img = phasediv::testing::random_field(16, 16, 1);
  Rng rng(1);
  const RealField clean = apply_noise(img, NoiseParams::none(200.0), rng);
  EXPECT_LT((clean - img * (0.6 * 200.0 / img.mean())).abs().maxCoeff(), 1e-9);
  NoiseParams bad;
  bad.quantum_efficiency = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Noise, RelativeShotNoiseShrinksWithDose) {
  const RealField img = RealField::Constant(64, 64, 1.0);
  NoiseParams p;
  p.quantum_efficiency = 1.0;
  p.dark_mean = 0.0;
  p.read_sigma = 0.0;
  double previous = 1e9;
  for (double photons : {10.0, 1000.0, 100000.0}) {
    p.photons_per_pixel = photons;
    Rng rng(3);
    const RealField d = apply_noise(img, p, rng) / photons;
    const double rel = std::sqrt((d - d.mean()).square().mean());
    EXPECT_LT(rel, previous);
    EXPECT_NEAR(rel, 1.0 / std::sqrt(photons), 0.2 / std::sqrt(photons));
    previous = rel;
  }
}

TEST(Stack, ReproducibleAndImagesDiffer) {
  const DiversityStack a = phasediv::testing::small_stack(64, 0.5, 4);
  const DiversityStack b = phasediv::testing::small_stack(64, 0.5, 4);
  ASSERT_EQ(a.count(), 3);
  for (int k = 0; k < 3; ++k) EXPECT_TRUE((a.images[k] == b.images[k]).all());
  EXPECT_GT((a.images[0] - a.images[1]).abs().maxCoeff(), 0.0);
  EXPECT_GT((a.images[0] - a.images[2]).abs().maxCoeff(), 0.0);
  ASSERT_TRUE(a.truth.has_value());
  const auto z = default_diversity(optics(64));
  EXPECT_DOUBLE_EQ(z[0], 1.8);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
  EXPECT_DOUBLE_EQ(z[2], -1.8);
}

TEST(Stack, ValidationRejectsDegenerateDiversity) {
  DiversityStack s = phasediv::testing::small_stack(64, 0.5, 4);
  s.diversity_z = {0.0, 0.0, 0.0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = phasediv::testing::small_stack(64, 0.5, 4);
  s.images.resize(1);
  s.diversity_z.resize(1);
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SpatialVariance, ZeroMagnitudeMatchesIsoplanatic) {
  const OpticalConfig o = optics(64);
  Rng r1(5), r2(5);
  const AberrationSample ab = sample_aberration(0.5, r1, FrequencyGrid(o));
  r2 = r1;
  const ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 128, 5);
  const auto z = default_diversity(o);
  const auto a = simulate_spatially_variant_stack(spec, ab, {0.0, SpatialFrequency::Low}, z, NoiseParams{}, o, r1);
  const auto b = simulate_stack(spec, ab, z, NoiseParams{}, o, r2);
  for (int k = 0; k < 3; ++k) EXPECT_TRUE((a.images[k] == b.images[k]).all());
}

TEST(SpatialVariance, PerturbationsHaveZeroMeanAndWeightsPartitionUnity) {
  Rng rng(8);
  const FrequencyGrid grid(optics(64));
  const AberrationSample ab = sample_aberration(0.5, rng, grid);
  for (auto freq : {SpatialFrequency::Low, SpatialFrequency::High}) {
    const SpatialVarianceParams sv{0.5, freq};
    const auto p = spatial_variance_perturbations(ab.coeffs, sv, rng);
    ASSERT_EQ(static_cast<int>(p.size()), sv.tiles_per_axis() * sv.tiles_per_axis());
    for (int j : ab.coeffs.indices()) {
      double sum = 0.0;
      for (const auto& t : p) sum += t.get(j);
      EXPECT_NEAR(sum / p.size(), 0.0, 1e-12);
    }
    RealField total = RealField::Zero(64, 64);
    for (int ty = 0; ty < sv.tiles_per_axis(); ++ty) {
      for (int tx = 0; tx < sv.tiles_per_axis(); ++tx) total += tile_weight(64, sv.tiles_per_axis(), ty, tx);
    }
    EXPECT_LT((total - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(PhaseNoise, ZeroMeanPerturbations) {
  Rng rng(9);
  const FrequencyGrid grid(optics(64));
  const AberrationSample ab = sample_aberration(0.5, rng, grid);
  const std::vector<double> z = {1.8, 0.0, -1.8};
  const auto same = apply_phase_noise(ab.coeffs, z, {0.0}, rng);
  ASSERT_EQ(same.size(), 3u);
  for (const auto& w : same) EXPECT_EQ(w, ab.coeffs);

  const auto noisy = apply_phase_noise(ab.coeffs, z, {0.3}, rng);
  const auto norms = relative_zernike_norms(4, 45, grid);
  for (int j : ab.coeffs.indices()) {
    double sum = 0.0;
    for (const auto& w : noisy) sum += w.get(j) - ab.coeffs.get(j);
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
  for (const auto& w : noisy) EXPECT_GT(rwe(w, ab.coeffs, norms), 0.0);
}
