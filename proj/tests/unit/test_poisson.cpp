#include "phasediv/diversity_model.hpp"
#include "phasediv/fft.hpp"
#include "phasediv/poisson.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace phasediv;
using phasediv::testing::random_coeffs;
using phasediv::testing::random_field;
using phasediv::testing::small_stack;

namespace {

struct Instance {
  DiversityStack stack;
  ZernikeVector c;
  std::vector<ComplexField> otf;
  std::vector<RealField> images;
};

Instance instance(int n, std::uint64_t seed) {
  Instance in{small_stack(n, 0.5, seed, NoiseParams::low_additive(100.0)), {}, {}, {}};
  in.c = random_coeffs(default_estimated_indices(), 0.5, seed + 100);
  in.otf = DiversityModel(in.stack.config, in.stack.diversity_z, in.c.indices()).forward(in.c).otf;
  in.images = clamp_images(in.stack.images, 1e-8);
  return in;
}

}  // namespace

TEST(PoissonLikelihood, MatchesDirectSum) {
  const Instance in = instance(32, 1);
  const RealField f = random_field(32, 32, 2, 1.0, 3.0);
  double expect = 0.0;
  for (std::size_t k = 0; k < in.images.size(); ++k) {
    const RealField g = fft::convolve(f, fft::inverse_real(in.otf[k]));
    expect += (in.images[k] * g.max(1e-8).log() - g).sum();
  }
  EXPECT_NEAR(poisson_likelihood_kernel(f, in.otf, in.images, 1e-8), expect, 1e-10 * std::abs(expect));
  EXPECT_NEAR(poisson_likelihood(in.c, f, in.stack), expect, 1e-10 * std::abs(expect));
}

TEST(PoissonLikelihood, ClampsNegativeCounts) {
  const std::vector<RealField> images = {RealField::Constant(2, 2, -3.0)};
  EXPECT_EQ(clamp_images(images, 1e-8)[0].minCoeff(), 1e-8);
}

TEST(PoissonGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const Instance in = instance(64, seed);
    RealField f = random_field(64, 64, seed, 0.5, 1.5);
    f *= in.images[0].sum() / f.sum();
    const auto idx = default_estimated_indices();
    const auto g = poisson_gradient(in.c, f, in.stack, idx);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ZernikeVector up = in.c, down = in.c;
      up.set(idx[i], in.c.get(idx[i]) + h);
      down.set(idx[i], in.c.get(idx[i]) - h);
      const double fd = (poisson_likelihood(up, f, in.stack) - poisson_likelihood(down, f, in.stack)) / (2 * h);
      num += (g[i] - fd) * (g[i] - fd);
      den += fd * fd;
    }
    EXPECT_LT(std::sqrt(num / den), 1e-5) << seed;
  }
}

TEST(PoissonEm, LikelihoodNeverDecreases) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const Instance in = instance(32, seed);
    RealField f = RealField::Constant(32, 32, in.images[0].mean());
    double prev = poisson_likelihood_kernel(f, in.otf, in.images, 1e-8);
    for (int it = 0; it < 50; ++it) {
      f = em_update_kernel(f, in.otf, in.images, 1e-8);
      const double next = poisson_likelihood_kernel(f, in.otf, in.images, 1e-8);
      EXPECT_GE(next, prev - 1e-10 * std::abs(prev));
      prev = next;
    }
  }
}

TEST(PoissonEm, FluxSettlesToMeanCountsAndStaysNonnegative) {
  const Instance in = instance(32, 20);
  double counts = 0.0;
  for (const auto& d : in.images) counts += d.sum() / in.images.size();
  RealField f = random_field(32, 32, 1, 0.1, 2.0);
  f = em_update_kernel(f, in.otf, in.images, 1e-8);
  EXPECT_NEAR(f.sum(), counts, 1e-10 * counts);
  const RealField g = em_update_kernel(f, in.otf, in.images, 1e-8);
  EXPECT_NEAR(g.sum(), f.sum(), 1e-10 * f.sum());
  EXPECT_GE(g.minCoeff(), 0.0);
}

TEST(PoissonEm, ObjectUpdateHasUnitSum) {
  const Instance in = instance(32, 21);
  const RealField f = object_update(RealField::Constant(32, 32, 1.0 / 1024), in.c, in.stack);
  EXPECT_NEAR(f.sum(), 1.0, 1e-12);
}

TEST(PoissonKernels, AcceptHalfAndFullSpectra) {
  const Instance in = instance(32, 22);
  const RealField f = random_field(32, 32, 3, 1.0, 2.0);
  std::vector<ComplexField> half;
  for (const auto& o : in.otf) half.push_back(o.leftCols(17));
  EXPECT_NEAR(poisson_likelihood_kernel(f, half, in.images, 1e-8), poisson_likelihood_kernel(f, in.otf, in.images, 1e-8),
              1e-12 * std::abs(poisson_likelihood_kernel(f, in.otf, in.images, 1e-8)));
  EXPECT_LT((em_update_kernel(f, half, in.images, 1e-8) - em_update_kernel(f, in.otf, in.images, 1e-8)).abs().maxCoeff(),
            1e-10);
}

TEST(PoissonEstimator, RecoversNoiselessAberration) {
  const OpticalConfig o = phasediv::testing::optics(64);
  Rng rng(30);
  AberrationSample truth = sample_aberration(0.3, rng, FrequencyGrid(o));
  truth.coeffs = truth.coeffs.restricted_to(default_estimated_indices());
  ObjectSpec spec = ObjectSpec::preset(ObjectKind::CellsDense, 128, 30);
  spec.support_size = 16;
  const DiversityStack stack = simulate_stack(spec, truth, default_diversity(o), NoiseParams::none(), o, rng);
  const EstimationResult res = estimate_poisson(stack);
  const auto norms = relative_zernike_norms(4, 45, FrequencyGrid(o));
  EXPECT_LT(rwe(res.coeffs, truth.coeffs, norms), 0.02);
  EXPECT_EQ(res.estimator, "poisson");
  EXPECT_GE(res.object_estimate.minCoeff(), 0.0);
  for (const auto& t : res.trace) EXPECT_TRUE(std::isfinite(t.objective));
}

TEST(PoissonEstimator, Deterministic) {
  const DiversityStack stack = small_stack(64, 0.5, 31);
  PoissonOptions opts;
  opts.max_outer_iterations = 5;
  EXPECT_EQ(estimate_poisson(stack, opts).coeffs, estimate_poisson(stack, opts).coeffs);
}

TEST(PoissonOptionsTest, RejectsBadValues) {
  PoissonOptions o;
  o.floor = 0.0;
  EXPECT_THROW(o.validate(), ConfigError);
  o = PoissonOptions{};
  o.object_inner_iterations = 0;
  EXPECT_THROW(o.validate(), ConfigError);
}
