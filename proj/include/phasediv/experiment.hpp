#pragma once

#include "phasediv/correct.hpp"
#include "phasediv/gaussian.hpp"
#include "phasediv/poisson.hpp"
#include "phasediv/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace phasediv {

enum class ExperimentKind { AbmagSweep, NoiseSweep, ImsizeSweep, SvStudy, PhaseNoiseSweep, CorrectionCompare, Single };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

/// Object generator settings; unset knobs take the preset of `kind` at the trial's canvas size.
struct ObjectSettings {
  ObjectKind kind = ObjectKind::CellsDense;
  int canvas_size = 0;  // 0: twice the image size
  std::optional<int> cell_count;
  std::optional<double> feature_scale;
  std::optional<double> texture_strength;
  int support_size = 0;

  ObjectSpec resolve(int image_size, std::uint64_t seed) const;
};

enum class ImsizeMode { Crop, Magnify };

/// Everything needed to reproduce a sweep. The meaning of axis_values depends on kind:
/// aberration wrms (waves), photons per pixel, image size (pixels), spatial-variance
/// magnitude, phase-noise sigma (radians), or photons per pixel for correction-compare.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Single;
  std::vector<double> axis_values = {2.0};
  int trials = 20;
  ObjectSettings object;
  OpticalConfig optics;
  NoiseParams noise;
  double aberration_wrms = 2.0;                    // waves, when not the swept quantity
  std::vector<double> diversity_waves = {3.0, 0.0, -3.0};  // axial offsets in wavelengths
  std::string estimator = "both";                  // gaussian, poisson or both
  GaussianOptions gaussian;
  PoissonOptions poisson;
  /// Also run every estimator on the factor-2 downscaled stack ("<name>-downscaled").
  bool downscale = false;
  ImsizeMode imsize_mode = ImsizeMode::Crop;
  SpatialFrequency sv_frequency = SpatialFrequency::Low;
  CorrectionOptions correction;
  std::uint64_t base_seed = 1;
  std::string output_dir = "results";
  int workers = 1;
  /// Abort once more than this fraction of all planned trials has failed.
  double max_failure_fraction = 0.1;

  void validate() const;
  std::vector<std::string> estimators() const;
  std::vector<double> diversity_z(const OpticalConfig& optics) const;
};

ExperimentConfig parse_experiment_config(const std::string& yaml_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Fully resolved configuration, suitable for the manifest and for re-loading.
std::string to_yaml(const ExperimentConfig& config);
/// Hash of the settings that determine a single trial's outcome (not output_dir, workers,
/// trial count or, except for image-size sweeps, the axis values).
std::string config_hash(const ExperimentConfig& config);

/// One row of the raw per-trial table.
struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  double axis_value = 0.0;
  std::string estimator;  // or correction method for correction-compare
  double rwe = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double initial_wrms = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
  bool converged = false;
  int iterations = 0;
  bool ok = true;
  std::string reason;
};

std::string trials_csv(const std::vector<TrialRecord>& records);
/// Throws std::invalid_argument when the header does not match the trial schema.
std::vector<TrialRecord> parse_trials_csv(const std::string& text);

struct SweepPoint {
  double axis_value = 0.0;
  std::string estimator;
  std::vector<int> trials;      // trial index of each value
  std::vector<double> values;   // rwe, or ssim for correction methods
  double mean = 0.0;
  double standard_error = 0.0;  // sample std / sqrt(count)
  double mean_wall_time = 0.0;
};

struct SweepResult {
  std::string metric = "rwe";
  std::vector<SweepPoint> points;
  std::vector<TrialRecord> records;
  int planned_trials = 0;
  int failed_trials = 0;

  const SweepPoint* find(double axis_value, const std::string& estimator) const;
  std::vector<std::string> estimators() const;
};

/// Aggregates successful records per (axis value, estimator). The metric is ssim when any
/// record carries one, rwe otherwise.
SweepResult aggregate(const std::vector<TrialRecord>& records);
std::string aggregate_csv(const SweepResult& result);

/// Seed of trial i: base_seed + i.
inline std::uint64_t trial_seed(const ExperimentConfig& config, int trial) {
  return config.base_seed + static_cast<std::uint64_t>(trial);
}

/// Optical configuration used at one axis point (image-size sweeps change grid and pitch).
OpticalConfig trial_optics(const ExperimentConfig& config, double axis_value);

/// The stack every estimator of one trial sees.
DiversityStack simulate_trial_stack(const ExperimentConfig& config, double axis_value, std::uint64_t seed);

/// Runs one trial in memory; throws if simulation or estimation fails.
std::vector<TrialRecord> run_trial(const ExperimentConfig& config, double axis_value, int trial);

/// Runs all trials (skipping those already stored under output_dir), then writes
/// trials.csv, aggregate.csv, plots and manifest.yaml. Throws ExcessiveFailures when more
/// than max_failure_fraction of the planned trials fail.
SweepResult run_experiment(const ExperimentConfig& config);

/// run_experiment for image-size sweeps; additionally plots wall time against image size.
SweepResult run_imsize_experiment(const ExperimentConfig& config);

}  // namespace phasediv
