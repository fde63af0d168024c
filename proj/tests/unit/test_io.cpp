#include "phasediv/errors.hpp"
#include "phasediv/io.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace phasediv;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("phasediv_io_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Hand-assembled big-endian 16-bit TIFF with two strips.
std::string big_endian_uint16_tiff(int width, int height, const std::vector<std::uint16_t>& pixels) {
  std::string out = "MM";
  auto p16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  };
  auto p32 = [&](std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  const int strip_rows = (height + 1) / 2;
  const std::uint32_t offsets_at = 8 + 2 + 8 * 12 + 4;
  const std::uint32_t counts_at = offsets_at + 8;
  const std::uint32_t data = counts_at + 8;
  const std::uint32_t first_bytes = strip_rows * width * 2;
  const std::uint32_t second_bytes = (height - strip_rows) * width * 2;
  p16(42);
  p32(8);
  p16(8);
  auto entry_short = [&](std::uint16_t tag, std::uint16_t v) {
    p16(tag), p16(3), p32(1), p16(v), p16(0);
  };
  entry_short(256, static_cast<std::uint16_t>(width));
  entry_short(257, static_cast<std::uint16_t>(height));
  entry_short(258, 16);
  entry_short(259, 1);
  p16(273), p16(4), p32(2), p32(offsets_at);
  entry_short(277, 1);
  entry_short(278, static_cast<std::uint16_t>(strip_rows));
  p16(279), p16(4), p32(2), p32(counts_at);
  p32(0);
  p32(data);
  p32(data + first_bytes);
  p32(first_bytes);
  p32(second_bytes);
  for (auto v : pixels) p16(v);
  return out;
}

}  // namespace

TEST(Tiff, FloatRoundTrip) {
  TempDir dir;
  RealField image = phasediv::testing::random_field(13, 21, 1, -5.0, 5.0);
  write_tiff(dir.path() / "a.tif", image);
  const RealField back = read_tiff(dir.path() / "a.tif");
  ASSERT_EQ(back.rows(), 13);
  ASSERT_EQ(back.cols(), 21);
  EXPECT_LT((back - image.cast<float>().cast<double>()).abs().maxCoeff(), 1e-12);
}

TEST(Tiff, ReadsBigEndianIntegerStrips) {
  TempDir dir;
  std::vector<std::uint16_t> pixels;
  for (int i = 0; i < 5 * 3; ++i) pixels.push_back(static_cast<std::uint16_t>(1000 * i + 7));
  const fs::path path = dir.path() / "be.tif";
  std::ofstream(path, std::ios::binary) << big_endian_uint16_tiff(5, 3, pixels);
  const RealField image = read_tiff(path);
  ASSERT_EQ(image.rows(), 3);
  ASSERT_EQ(image.cols(), 5);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 5; ++c) EXPECT_EQ(image(r, c), pixels[r * 5 + c]);
  }
}

TEST(Tiff, RejectsGarbage) {
  TempDir dir;
  std::ofstream(dir.path() / "x.tif", std::ios::binary) << "GIF89a not a tiff at all";
  EXPECT_THROW(read_tiff(dir.path() / "x.tif"), std::runtime_error);
  EXPECT_THROW(read_tiff(dir.path() / "missing.tif"), std::runtime_error);
}

TEST(StackIo, RoundTripKeepsImagesAndMetadata) {
  TempDir dir;
  const DiversityStack stack = phasediv::testing::small_stack(32, 0.3, 2);
  write_stack(dir.path() / "s", stack, NoiseParams::low_additive(500.0));
  const DiversityStack back = read_stack(dir.path() / "s");
  ASSERT_EQ(back.count(), stack.count());
  EXPECT_EQ(back.diversity_z, stack.diversity_z);
  EXPECT_EQ(back.config.grid_size, 32);
  EXPECT_DOUBLE_EQ(back.config.wavelength, stack.config.wavelength);
  EXPECT_DOUBLE_EQ(back.config.pixel_pitch, stack.config.pixel_pitch);
  EXPECT_EQ(back.seed, stack.seed);
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(back.truth->coeffs, stack.truth->coeffs);
  for (int k = 0; k < stack.count(); ++k) {
    EXPECT_LT((back.images[k] - stack.images[k]).abs().maxCoeff(), 1e-6 * stack.images[k].abs().maxCoeff());
  }
}

TEST(StackIo, MissingOrBadMetadataIsAConfigError) {
  TempDir dir;
  EXPECT_THROW(read_stack(dir.path()), ConfigError);
  std::ofstream(dir.path() / kStackMetadata) << "images: [a.tif]\ndiversity_z: [1.0, 2.0]\n";
  EXPECT_THROW(read_stack(dir.path()), ConfigError);
  std::ofstream(dir.path() / kStackMetadata) << "images: [a.tif]\ndiversity_z: [1.0]\nbogus: 1\n";
  EXPECT_THROW(read_stack(dir.path()), ConfigError);
}

TEST(ResultIo, CoefficientsRoundTrip) {
  TempDir dir;
  const DiversityStack stack = phasediv::testing::small_stack(32, 0.3, 3);
  EstimationResult res;
  res.estimator = "gaussian";
  res.coeffs = phasediv::testing::random_coeffs(default_estimated_indices(), 0.8, 4);
  res.object_estimate = stack.images[1];
  res.trace.push_back({0, 1.0, 2.0, res.coeffs});
  write_estimation_result(dir.path(), res, stack);
  EXPECT_TRUE(fs::exists(dir.path() / "gaussian_trace.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "gaussian_object.tif"));
  const ZernikeVector back = read_coefficients(dir.path() / "gaussian_result.yaml");
  ASSERT_EQ(back.indices(), res.coeffs.indices());
  for (int j : back.indices()) EXPECT_NEAR(back.get(j), res.coeffs.get(j), 1e-10);
  EXPECT_NE(read_text(dir.path() / "gaussian_result.yaml").find("rwe_waves"), std::string::npos);

  std::ofstream(dir.path() / "bad.yaml") << "estimator: x\n";
  EXPECT_THROW(read_coefficients(dir.path() / "bad.yaml"), ConfigError);
}

TEST(Files, AtomicWriteReplacesAndLeavesNoTemporaries) {
  TempDir dir;
  const fs::path p = dir.path() / "sub" / "f.txt";
  write_text_atomic(p, "one");
  write_text_atomic(p, "two");
  EXPECT_EQ(read_text(p), "two");
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(p.parent_path())) ++files;
  EXPECT_EQ(files, 1);
}
