#include "phasediv/fft.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace phasediv;
using phasediv::testing::random_field;

TEST(Fft, ParsevalOnEightByEight) {
  const RealField x = random_field(8, 8, 3, -1.0, 1.0);
  const ComplexField X = fft::forward(x);
  EXPECT_NEAR(X.abs2().sum() / 64.0, x.square().sum(), 1e-12 * x.square().sum());
}

TEST(Fft, MatchesDirectDft) {
  const RealField x = random_field(6, 8, 4);
  const ComplexField X = fft::forward(x);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int u = 0; u < 6; ++u) {
    for (int v = 0; v < 8; ++v) {
      std::complex<double> sum = 0.0;
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 8; ++c) sum += x(r, c) * std::polar(1.0, -two_pi * (u * r / 6.0 + v * c / 8.0));
      }
      EXPECT_NEAR(std::abs(sum - X(u, v)), 0.0, 1e-12);
    }
  }
}

TEST(Fft, InverseUndoesForward) {
  const RealField x = random_field(16, 16, 5);
  EXPECT_LT((fft::inverse_real(fft::forward(x)) - x).abs().maxCoeff(), 1e-14);
  EXPECT_LT((fft::inverse_half(fft::forward_half(x), 16) - x).abs().maxCoeff(), 1e-14);
}

TEST(Fft, HalfSpectrumIsLeftPartOfFull) {
  const RealField x = random_field(12, 10, 6);
  const ComplexField full = fft::forward(x);
  const ComplexField half = fft::forward_half(x);
  ASSERT_EQ(half.cols(), 6);
  EXPECT_LT((full.leftCols(6) - half).abs().maxCoeff(), 1e-12);
  EXPECT_THROW(fft::inverse_half(half, 14), std::invalid_argument);
}

TEST(Fft, ConvolveMatchesDirectCyclicSum) {
  const int n = 32;
  const RealField a = random_field(n, n, 7);
  const RealField b = random_field(n, n, 8);
  const RealField c = fft::convolve(a, b);
  for (int r : {0, 5, 31}) {
    for (int s : {0, 17, 30}) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) sum += a(i, j) * b(((r - i) % n + n) % n, ((s - j) % n + n) % n);
      }
      EXPECT_NEAR(c(r, s), sum, 1e-10 * sum);
    }
  }
}
