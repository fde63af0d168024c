#include "phasediv/correct.hpp"
#include "phasediv/errors.hpp"
#include "phasediv/experiment.hpp"
#include "phasediv/io.hpp"
#include "phasediv/plot.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace phasediv;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeError = 2, kTooManyFailures = 3 };

/// Flags shared by every verb.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::string estimator;
  bool downscale = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
  app->add_option("--config", c.config, "YAML configuration file");
  app->add_option("--seed", c.seed, "Base seed (trial i uses seed + i)");
  app->add_option("--out", c.out, out_help);
  app->add_option("--workers", c.workers, "Concurrent trials")->check(CLI::PositiveNumber);
  app->add_option("--estimator", c.estimator, "Estimator selection")
      ->check(CLI::IsMember({"gaussian", "poisson", "both"}));
  app->add_flag("--downscale", c.downscale, "Also estimate on 2x2-binned images");
  app->add_flag("-q,--quiet", c.quiet, "Only print warnings and errors");
}

ExperimentConfig load(const Common& c, std::optional<ExperimentKind> force_kind = std::nullopt) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (force_kind) cfg.kind = *force_kind;
  if (c.seed) cfg.base_seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.estimator.empty()) cfg.estimator = c.estimator;
  if (c.downscale) cfg.downscale = true;
  cfg.validate();
  return cfg;
}

void print_summary(const SweepResult& result) {
  std::printf("%-14s %-22s %6s %12s %12s %10s\n", "axis", "estimator", "count", result.metric.c_str(), "stderr",
              "time_s");
  for (const auto& p : result.points) {
    std::printf("%-14g %-22s %6zu %12.5f %12.5f %10.3f\n", p.axis_value, p.estimator.c_str(), p.values.size(), p.mean,
                p.standard_error, p.mean_wall_time);
  }
  if (result.failed_trials > 0) std::printf("failed trials: %d of %d\n", result.failed_trials, result.planned_trials);
}

int cmd_simulate(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path out = c.out.empty() ? fs::path("stack") : fs::path(c.out);
  const double axis = cfg.axis_values.front();
  const DiversityStack stack = simulate_trial_stack(cfg, axis, trial_seed(cfg, 0));
  NoiseParams noise = cfg.noise;
  if (cfg.kind == ExperimentKind::NoiseSweep || cfg.kind == ExperimentKind::CorrectionCompare) {
    noise.photons_per_pixel = axis;
  }
  write_stack(out, stack, noise);
  std::printf("wrote %d images (%dx%d) to %s\n", stack.count(), stack.config.grid_size, stack.config.grid_size,
              out.string().c_str());
  return kOk;
}

int cmd_estimate(const Common& c, const std::string& input) {
  const ExperimentConfig cfg = load(c);
  DiversityStack stack = input.empty() ? simulate_trial_stack(cfg, cfg.axis_values.front(), trial_seed(cfg, 0))
                                       : read_stack(input);
  const fs::path out = c.out.empty() ? fs::path("estimate") : fs::path(c.out);
  for (const auto& name : cfg.estimators()) {
    std::vector<std::pair<std::string, DiversityStack>> runs = {{name, stack}};
    if (cfg.downscale) runs.emplace_back(name + "-downscaled", downscale_stack(stack, name == "poisson"));
    for (auto& [label, s] : runs) {
      EstimationResult res = name == "gaussian" ? estimate_gaussian(s, cfg.gaussian) : estimate_poisson(s, cfg.poisson);
      res.estimator = label;
      write_estimation_result(out, res, s);
      std::printf("%s: %d iterations, %.2f s, %s\n", label.c_str(), res.iterations, res.wall_time,
                  res.converged ? "converged" : res.reason.c_str());
      const double two_pi = 6.283185307179586;
      for (const auto& [j, v] : res.coeffs) std::printf("  Z%-3d %+12.6f rad %+10.6f waves\n", j, v, v / two_pi);
      if (s.truth) {
        const FrequencyGrid grid(s.config);
        const auto norms = relative_zernike_norms(4, 45, grid);
        const auto indices = res.coeffs.indices();
        std::printf("  rwe %.5f waves (initial %.5f)\n",
                    rwe(res.coeffs, s.truth->coeffs.restricted_to(indices), norms),
                    wrms(s.truth->coeffs.restricted_to(indices), norms));
      }
    }
  }
  std::printf("results in %s\n", out.string().c_str());
  return kOk;
}

int cmd_sweep(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const SweepResult result =
      cfg.kind == ExperimentKind::ImsizeSweep ? run_imsize_experiment(cfg) : run_experiment(cfg);
  print_summary(result);
  std::printf("results in %s\n", cfg.output_dir.c_str());
  return kOk;
}

int cmd_correct(const Common& c, const std::string& stack_dir, const std::string& coeffs_file, int iterations) {
  if (stack_dir.empty()) {
    const ExperimentConfig cfg = load(c, ExperimentKind::CorrectionCompare);
    const SweepResult result = run_experiment(cfg);
    print_summary(result);
    std::printf("results in %s\n", cfg.output_dir.c_str());
    return kOk;
  }
  // Deconvolve a recorded stack with previously estimated coefficients.
  if (coeffs_file.empty()) throw ConfigError("correct --stack needs --coeffs <result.yaml>");
  const DiversityStack stack = read_stack(stack_dir);
  const ZernikeVector coeffs = read_coefficients(coeffs_file);
  const fs::path out = c.out.empty() ? fs::path("deconvolved.tif") : fs::path(c.out);
  write_tiff(out, rl_deconvolve_multi(stack, coeffs, iterations));
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int cmd_plot(const Common& c, const std::vector<std::string>& csvs) {
  const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  for (const auto& p : render_plots(paths, out)) std::printf("wrote %s\n", p.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-diversity aberration estimation: simulation, estimation and experiment sweeps"};
  app.require_subcommand(1);

  Common sim_c, est_c, sweep_c, corr_c, plot_c;
  auto* sim = app.add_subcommand("simulate", "Simulate one diversity stack and write it as TIFF + stack.yaml");
  add_common(sim, sim_c, "Output stack directory (default: stack)");

  std::string est_input;
  auto* est = app.add_subcommand("estimate", "Estimate aberrations from a stack directory (or a simulated one)");
  add_common(est, est_c, "Output directory for results (default: estimate)");
  est->add_option("input", est_input, "Stack directory with TIFF images and stack.yaml")->check(CLI::ExistingDirectory);

  auto* sweep = app.add_subcommand("sweep", "Run a seeded experiment sweep and write CSV tables and plots");
  add_common(sweep, sweep_c, "Output directory (overrides output_dir)");

  std::string corr_stack, corr_coeffs;
  int corr_iterations = 50;
  auto* corr = app.add_subcommand("correct", "Compare correction approaches, or deconvolve a recorded stack");
  add_common(corr, corr_c, "Output directory, or TIFF path with --stack");
  corr->add_option("--stack", corr_stack, "Stack directory to deconvolve")->check(CLI::ExistingDirectory);
  corr->add_option("--coeffs", corr_coeffs, "Result YAML with estimated coefficients")->check(CLI::ExistingFile);
  corr->add_option("--iterations", corr_iterations, "Richardson-Lucy iterations")->check(CLI::PositiveNumber);

  std::vector<std::string> plot_inputs;
  auto* plot = app.add_subcommand("plot", "Render one PNG per trial CSV");
  add_common(plot, plot_c, "Output directory (default: current directory)");
  plot->add_option("csv", plot_inputs, "trials.csv files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  for (const Common* c : {&sim_c, &est_c, &sweep_c, &corr_c, &plot_c}) {
    if (c->quiet) spdlog::set_level(spdlog::level::warn);
  }

  try {
    if (*sim) return cmd_simulate(sim_c);
    if (*est) return cmd_estimate(est_c, est_input);
    if (*sweep) return cmd_sweep(sweep_c);
    if (*corr) return cmd_correct(corr_c, corr_stack, corr_coeffs, corr_iterations);
    if (*plot) return cmd_plot(plot_c, plot_inputs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const ExcessiveFailures& e) {
    std::fprintf(stderr, "aborted: %s\n", e.what());
    return kTooManyFailures;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kRuntimeError;
}
