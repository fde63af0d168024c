#include "phasediv/errors.hpp"
#include "phasediv/experiment.hpp"
#include "phasediv/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace phasediv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phasediv_exp_" + name);
  fs::remove_all(p);
  return p;
}

/// A tiny, fast sweep: 32 x 32 images, few iterations.
ExperimentConfig tiny(const std::string& out) {
  ExperimentConfig cfg = parse_experiment_config(R"(
kind: abmag-sweep
axis_values: [0.1, 0.2]
trials: 2
optics: {grid_size: 32}
noise: {photons_per_pixel: 500}
gaussian: {max_iterations: 5}
poisson: {max_outer_iterations: 3}
)");
  cfg.output_dir = out;
  return cfg;
}

TrialRecord record(int trial, double axis, const std::string& est, double rwe) {
  TrialRecord r;
  r.trial = trial;
  r.seed = 100 + trial;
  r.axis_value = axis;
  r.estimator = est;
  r.rwe = rwe;
  r.initial_wrms = 0.5;
  r.wall_time = 0.25;
  r.converged = true;
  r.iterations = 4;
  return r;
}

}  // namespace

TEST(ExperimentConfigTest, DefaultsAndParsing) {
  const ExperimentConfig d = parse_experiment_config("");
  EXPECT_EQ(d.kind, ExperimentKind::Single);
  EXPECT_EQ(d.trials, 20);
  EXPECT_EQ(d.estimators(), (std::vector<std::string>{"gaussian", "poisson"}));

  const ExperimentConfig c = parse_experiment_config(R"(
kind: noise-sweep
axis_values: [10, 100]
trials: 5
estimator: poisson
imsize_mode: magnify
sv_frequency: high
correction: {rl_iterations: 7}
)");
  EXPECT_EQ(c.kind, ExperimentKind::NoiseSweep);
  EXPECT_EQ(c.axis_values, (std::vector<double>{10, 100}));
  EXPECT_EQ(c.estimators(), (std::vector<std::string>{"poisson"}));
  EXPECT_EQ(c.imsize_mode, ImsizeMode::Magnify);
  EXPECT_EQ(c.sv_frequency, SpatialFrequency::High);
  EXPECT_EQ(c.correction.rl_iterations, 7);
}

TEST(ExperimentConfigTest, RejectsInvalidInput) {
  EXPECT_THROW(parse_experiment_config("kind: nonsense"), ConfigError);
  EXPECT_THROW(parse_experiment_config("unknown_key: 1"), ConfigError);
  EXPECT_THROW(parse_experiment_config("trials: 0"), ConfigError);
  EXPECT_THROW(parse_experiment_config("axis_values: [1, 2]"), ConfigError);  // single takes one value
  EXPECT_THROW(parse_experiment_config("kind: noise-sweep\naxis_values: [0]"), ConfigError);
  EXPECT_THROW(parse_experiment_config("kind: imsize-sweep\naxis_values: [33]"), ConfigError);
  EXPECT_THROW(parse_experiment_config("estimator: both_of_them"), ConfigError);
  EXPECT_THROW(parse_experiment_config("optics: {grid_size: 30}"), ConfigError);
  EXPECT_THROW(parse_experiment_config("optics: {pixel_pitch: 0.2}\ndownscale: true"), ConfigError);
  EXPECT_THROW(parse_experiment_config("trials: [unclosed"), ConfigError);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.yaml"), ConfigError);
}

TEST(ExperimentConfigTest, YamlRoundTripPreservesHash) {
  ExperimentConfig cfg = tiny("somewhere");
  cfg.aberration_wrms = 0.123456789012345;
  const ExperimentConfig back = parse_experiment_config(to_yaml(cfg));
  EXPECT_EQ(to_yaml(back), to_yaml(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
}

TEST(ExperimentConfigTest, HashTracksOnlyTrialDeterminingSettings) {
  const ExperimentConfig base = tiny("a");
  ExperimentConfig c = base;
  c.output_dir = "b";
  c.workers = 4;
  c.trials = 9;
  c.axis_values = {0.3};
  c.max_failure_fraction = 0.5;
  EXPECT_EQ(config_hash(c), config_hash(base));
  c = base;
  c.noise.read_sigma += 1.0;
  EXPECT_NE(config_hash(c), config_hash(base));
  c = base;
  c.base_seed = 2;
  EXPECT_NE(config_hash(c), config_hash(base));
}

TEST(TrialCsv, RoundTripAndSchemaCheck) {
  std::vector<TrialRecord> rs = {record(0, 0.5, "gaussian", 0.01), record(1, 0.5, "poisson", 0.02)};
  rs[1].ok = false;
  rs[1].reason = "diverged, badly";
  rs[1].rwe = std::nan("");
  const auto back = parse_trials_csv(trials_csv(rs));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].seed, 100u);
  EXPECT_DOUBLE_EQ(back[0].rwe, 0.01);
  EXPECT_TRUE(std::isnan(back[0].ssim));
  EXPECT_FALSE(back[1].ok);
  EXPECT_TRUE(std::isnan(back[1].rwe));
  EXPECT_EQ(back[1].reason.find(','), std::string::npos);
  EXPECT_THROW(parse_trials_csv("a,b,c\n1,2,3\n"), std::invalid_argument);
  EXPECT_THROW(parse_trials_csv(""), std::invalid_argument);
}

TEST(Aggregate, MeanAndStandardErrorPerPoint) {
  std::vector<TrialRecord> rs;
  const double values[] = {0.1, 0.2, 0.6};
  for (int t = 0; t < 3; ++t) rs.push_back(record(t, 1.0, "gaussian", values[t]));
  rs.push_back(record(0, 2.0, "gaussian", 0.4));
  TrialRecord bad = record(3, 1.0, "none", 0.0);
  bad.ok = false;
  rs.push_back(bad);
  const SweepResult r = aggregate(rs);
  EXPECT_EQ(r.metric, "rwe");
  EXPECT_EQ(r.failed_trials, 1);
  const SweepPoint* p = r.find(1.0, "gaussian");
  ASSERT_NE(p, nullptr);
  EXPECT_NEAR(p->mean, 0.3, 1e-12);
  // sample standard deviation of {0.1, 0.2, 0.6} is sqrt(0.07)
  EXPECT_NEAR(p->standard_error, std::sqrt(0.07) / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(p->mean_wall_time, 0.25, 1e-12);
  EXPECT_EQ(r.find(2.0, "gaussian")->standard_error, 0.0);
  EXPECT_EQ(r.find(2.0, "poisson"), nullptr);

  rs[0].ssim = 0.9;
  EXPECT_EQ(aggregate(rs).metric, "ssim");
}

TEST(Trials, EstimatorsSeeTheSameStack) {
  const ExperimentConfig cfg = tiny("unused");
  const DiversityStack a = simulate_trial_stack(cfg, 0.2, trial_seed(cfg, 1));
  const DiversityStack b = simulate_trial_stack(cfg, 0.2, trial_seed(cfg, 1));
  for (int k = 0; k < a.count(); ++k) EXPECT_EQ((a.images[k] - b.images[k]).abs().maxCoeff(), 0.0);
  const DiversityStack c = simulate_trial_stack(cfg, 0.2, trial_seed(cfg, 2));
  EXPECT_GT((a.images[0] - c.images[0]).abs().maxCoeff(), 0.0);

  const auto records = run_trial(cfg, 0.2, 1);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].estimator, "gaussian");
  EXPECT_EQ(records[1].estimator, "poisson");
  EXPECT_EQ(records[0].initial_wrms, records[1].initial_wrms);
  EXPECT_EQ(records[0].seed, trial_seed(cfg, 1));
}

TEST(Trials, ImageSizeOptics) {
  ExperimentConfig cfg = parse_experiment_config("kind: imsize-sweep\naxis_values: [32, 64]\n");
  EXPECT_EQ(trial_optics(cfg, 32).grid_size, 32);
  EXPECT_DOUBLE_EQ(trial_optics(cfg, 32).pixel_pitch, cfg.optics.pixel_pitch);
  cfg.imsize_mode = ImsizeMode::Magnify;
  cfg.optics.pixel_pitch = 0.05;
  EXPECT_DOUBLE_EQ(trial_optics(cfg, 32).pixel_pitch, 0.1);
  EXPECT_EQ(simulate_trial_stack(cfg, 32, 1).images[0].rows(), 32);
}

TEST(RunExperiment, WritesOutputsAndResumes) {
  const fs::path out = scratch("run");
  const ExperimentConfig cfg = tiny(out.string());
  const SweepResult first = run_experiment(cfg);
  EXPECT_EQ(first.planned_trials, 4);
  EXPECT_EQ(first.failed_trials, 0);
  EXPECT_EQ(first.points.size(), 4u);
  for (const char* f : {"trials.csv", "aggregate.csv", "rwe.png", "manifest.yaml"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const std::string trials = read_text(out / "trials.csv");
  const std::string manifest = read_text(out / "manifest.yaml");
  EXPECT_NE(manifest.find("cached_trials: 0"), std::string::npos);

  const SweepResult second = run_experiment(cfg);
  EXPECT_EQ(read_text(out / "trials.csv"), trials);
  EXPECT_NE(read_text(out / "manifest.yaml").find("cached_trials: 4"), std::string::npos);
  ASSERT_EQ(second.points.size(), first.points.size());
  for (std::size_t i = 0; i < first.points.size(); ++i) EXPECT_EQ(second.points[i].mean, first.points[i].mean);
  fs::remove_all(out);
}

TEST(RunExperiment, ExcessiveFailuresAbort) {
  const fs::path out = scratch("fail");
  ExperimentConfig cfg = tiny(out.string());
  cfg.object.canvas_size = 40;  // smaller than twice the image: every trial fails
  EXPECT_THROW(run_experiment(cfg), ExcessiveFailures);
  EXPECT_TRUE(fs::exists(out / "trials.csv"));
  EXPECT_NE(read_text(out / "manifest.yaml").find("aborted"), std::string::npos);
  fs::remove_all(out);
}
