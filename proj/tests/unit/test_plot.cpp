#include "phasediv/io.hpp"
#include "phasediv/plot.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace phasediv;
namespace fs = std::filesystem;

namespace {

PlotSpec two_series() {
  PlotSpec s;
  s.title = "RWE vs noise";
  s.x_label = "photons per pixel";
  s.y_label = "rwe";
  s.log_x = true;
  s.series.push_back({"gaussian", {10, 100, 1000}, {0.3, 0.1, 0.05}, {0.02, 0.01, 0.005}});
  s.series.push_back({"poisson", {10, 100, 1000}, {0.2, 0.08, 0.05}, {}});
  return s;
}

}  // namespace

TEST(Plot, PngIsDeterministicAndWellFormed) {
  const auto a = render_png(two_series());
  const auto b = render_png(two_series());
  EXPECT_EQ(a, b);
  ASSERT_GT(a.size(), 8u);
  const std::uint8_t signature[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  EXPECT_TRUE(std::equal(signature, signature + 8, a.begin()));
  PlotSpec other = two_series();
  other.series[0].y[0] = 0.25;
  EXPECT_NE(render_png(other), a);
}

TEST(Plot, EmptyOrInvalidInputWritesNothing) {
  const fs::path out = fs::temp_directory_path() / "phasediv_plot_empty.png";
  fs::remove(out);
  PlotSpec empty;
  EXPECT_THROW(render_plot(empty, out), std::invalid_argument);
  EXPECT_FALSE(fs::exists(out));
  PlotSpec bad = two_series();
  bad.series[0].x[0] = 0.0;  // not on a log axis
  EXPECT_THROW(render_png(bad), std::invalid_argument);
  bad = two_series();
  bad.series[1].y.pop_back();
  EXPECT_THROW(render_png(bad), std::invalid_argument);
}

TEST(Plot, SinglePointRenders) {
  PlotSpec s;
  s.series.push_back({"only", {1.0}, {2.0}, {0.5}});
  EXPECT_NO_THROW(render_png(s));
}

TEST(Plot, RendersOnePngPerCsv) {
  const fs::path dir = fs::temp_directory_path() / "phasediv_plot_csv";
  fs::remove_all(dir);
  std::vector<TrialRecord> rs;
  for (int t = 0; t < 2; ++t) {
    TrialRecord r;
    r.trial = t;
    r.axis_value = 0.5;
    r.estimator = "gaussian";
    r.rwe = 0.1 + 0.01 * t;
    rs.push_back(r);
  }
  write_text_atomic(dir / "abmag.csv", trials_csv(rs));
  const std::vector<fs::path> inputs = {dir / "abmag.csv"};
  const auto written = render_plots(inputs, dir / "out");
  ASSERT_EQ(written.size(), 1u);
  EXPECT_EQ(written[0].filename(), "abmag.png");
  EXPECT_TRUE(fs::exists(written[0]));

  write_text_atomic(dir / "wrong.csv", "x,y\n1,2\n");
  const std::vector<fs::path> bad = {dir / "wrong.csv"};
  EXPECT_THROW(render_plots(bad, dir / "out2"), std::invalid_argument);
  EXPECT_FALSE(fs::exists(dir / "out2" / "wrong.png"));
  fs::remove_all(dir);
}
