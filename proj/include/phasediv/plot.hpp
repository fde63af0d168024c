#pragma once

#include "phasediv/experiment.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace phasediv {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> error;  // half-height of the error bar; empty for none
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  bool log_x = false;
  int width = 800;
  int height = 560;
};

/// PNG bytes of a line plot with markers and error bars. Deterministic for equal input.
/// Throws std::invalid_argument when there are no points to plot.
std::vector<std::uint8_t> render_png(const PlotSpec& spec);

/// render_png written atomically to `path`; nothing is written on error.
void render_plot(const PlotSpec& spec, const std::filesystem::path& path);

/// Mean metric (or mean wall time) with standard-error bars, one series per estimator.
PlotSpec sweep_plot(const SweepResult& result, const std::string& title, const std::string& x_label,
                    bool wall_time = false);

/// One PNG per trial CSV, written to out_dir as <csv stem>.png. Throws std::invalid_argument
/// on schema mismatch or when a CSV has no successful trials.
std::vector<std::filesystem::path> render_plots(std::span<const std::filesystem::path> csv_paths,
                                                const std::filesystem::path& out_dir);

}  // namespace phasediv
