#include "phasediv/experiment.hpp"

#include "phasediv/io.hpp"
#include "phasediv/plot.hpp"
#include "yaml_convert.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace phasediv {

namespace fs = std::filesystem;

// --- config -------------------------------------------------------------------

namespace {

struct KindName {
  ExperimentKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {ExperimentKind::AbmagSweep, "abmag-sweep"},         {ExperimentKind::NoiseSweep, "noise-sweep"},
    {ExperimentKind::ImsizeSweep, "imsize-sweep"},       {ExperimentKind::SvStudy, "sv-study"},
    {ExperimentKind::PhaseNoiseSweep, "phase-noise-sweep"}, {ExperimentKind::CorrectionCompare, "correction-compare"},
    {ExperimentKind::Single, "single"},
};

bool is_power_of_two_ratio(int big, int small) {
  if (small <= 0 || big % small != 0) return false;
  const int f = big / small;
  return (f & (f - 1)) == 0;
}

int max_axis_size(const ExperimentConfig& cfg) {
  return static_cast<int>(std::lround(*std::max_element(cfg.axis_values.begin(), cfg.axis_values.end())));
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  throw std::logic_error("unknown experiment kind");
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& k : kKindNames) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

ObjectSpec ObjectSettings::resolve(int image_size, std::uint64_t seed) const {
  ObjectSpec spec = ObjectSpec::preset(kind, canvas_size > 0 ? canvas_size : 2 * image_size, seed);
  if (cell_count) spec.cell_count = *cell_count;
  if (feature_scale) spec.feature_scale = *feature_scale;
  if (texture_strength) spec.texture_strength = *texture_strength;
  spec.support_size = support_size;
  return spec;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (axis_values.empty()) throw ConfigError("axis_values must not be empty");
  for (double v : axis_values) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("axis_values must be finite and nonnegative");
  }
  if (kind == ExperimentKind::Single && axis_values.size() != 1) {
    throw ConfigError("a single experiment takes exactly one axis value (the aberration wrms)");
  }
  if (!(aberration_wrms >= 0.0)) throw ConfigError("aberration_wrms must be >= 0");
  if (diversity_waves.size() < 2) throw ConfigError("diversity_waves needs at least two entries");
  if (std::all_of(diversity_waves.begin(), diversity_waves.end(), [&](double z) { return z == diversity_waves[0]; })) {
    throw ConfigError("diversity_waves must contain two distinct values");
  }
  estimators();
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
    throw ConfigError("max_failure_fraction must be in [0, 1]");
  }
  if (object.canvas_size < 0 || object.support_size < 0) throw ConfigError("object sizes must be >= 0");
  optics.validate();
  noise.validate();
  gaussian.validate();
  poisson.validate();
  correction.validate();

  switch (kind) {
    case ExperimentKind::NoiseSweep:
    case ExperimentKind::CorrectionCompare:
      for (double v : axis_values) {
        if (v <= 0.0) throw ConfigError("photon levels must be positive");
      }
      break;
    case ExperimentKind::ImsizeSweep: {
      const int big = max_axis_size(*this);
      for (double v : axis_values) {
        const int n = static_cast<int>(std::lround(v));
        if (n != v || n < 32 || n % 2 != 0) throw ConfigError("image sizes must be even integers >= 32");
        if (imsize_mode == ImsizeMode::Magnify && !is_power_of_two_ratio(big, n)) {
          throw ConfigError("magnify mode needs sizes that divide the largest size by a power of two");
        }
        trial_optics(*this, v).validate();
      }
      break;
    }
    default:
      break;
  }
  if (downscale && !trial_optics(*this, axis_values.front()).nyquist_sampled()) {
    throw ConfigError("downscale requires a Nyquist-sampled optical configuration");
  }
}

std::vector<std::string> ExperimentConfig::estimators() const {
  if (estimator == "gaussian" || estimator == "poisson") return {estimator};
  if (estimator == "both") return {"gaussian", "poisson"};
  throw ConfigError("estimator must be gaussian, poisson or both");
}

std::vector<double> ExperimentConfig::diversity_z(const OpticalConfig& config) const {
  std::vector<double> z;
  for (double w : diversity_waves) z.push_back(w * config.wavelength);
  return z;
}

namespace {

YAML::Node encode_settings(const ObjectSettings& s) {
  YAML::Node n;
  n["kind"] = to_string(s.kind);
  n["canvas_size"] = s.canvas_size;
  if (s.cell_count) n["cell_count"] = *s.cell_count;
  if (s.feature_scale) n["feature_scale"] = *s.feature_scale;
  if (s.texture_strength) n["texture_strength"] = *s.texture_strength;
  n["support_size"] = s.support_size;
  return n;
}

ObjectSettings decode_settings(const YAML::Node& n) {
  ObjectSettings s;
  if (!n) return s;
  const std::string where = "object";
  yaml::check_keys(n, {"kind", "canvas_size", "cell_count", "feature_scale", "texture_strength", "support_size"},
                   where);
  if (n["kind"]) s.kind = parse_object_kind(n["kind"].as<std::string>());
  yaml::read(n, "canvas_size", s.canvas_size, where);
  yaml::read(n, "support_size", s.support_size, where);
  if (n["cell_count"]) {
    int v = 0;
    yaml::read(n, "cell_count", v, where);
    s.cell_count = v;
  }
  if (n["feature_scale"]) {
    double v = 0.0;
    yaml::read(n, "feature_scale", v, where);
    s.feature_scale = v;
  }
  if (n["texture_strength"]) {
    double v = 0.0;
    yaml::read(n, "texture_strength", v, where);
    s.texture_strength = v;
  }
  return s;
}

YAML::Node encode_correction(const CorrectionOptions& c) {
  YAML::Node n;
  n["estimator"] = c.estimator;
  n["rl_iterations"] = c.rl_iterations;
  n["border_at_256"] = c.border_at_256;
  n["dose_factor"] = c.dose_factor;
  n["floor"] = c.floor;
  return n;
}

CorrectionOptions decode_correction(const YAML::Node& n, CorrectionOptions c) {
  const std::string where = "correction";
  yaml::check_keys(n, {"estimator", "rl_iterations", "border_at_256", "dose_factor", "floor"}, where);
  if (!n) return c;
  yaml::read(n, "estimator", c.estimator, where);
  yaml::read(n, "rl_iterations", c.rl_iterations, where);
  yaml::read(n, "border_at_256", c.border_at_256, where);
  yaml::read(n, "dose_factor", c.dose_factor, where);
  yaml::read(n, "floor", c.floor, where);
  return c;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  ExperimentConfig cfg;
  if (!root || root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  const std::string where = "config";
  yaml::check_keys(root,
                   {"kind", "axis_values", "trials", "object", "optics", "noise", "aberration_wrms", "diversity_waves",
                    "estimator", "gaussian", "poisson", "downscale", "imsize_mode", "sv_frequency", "correction",
                    "base_seed", "output_dir", "workers", "max_failure_fraction"},
                   where);
  if (root["kind"]) cfg.kind = parse_experiment_kind(root["kind"].as<std::string>());
  yaml::read(root, "axis_values", cfg.axis_values, where);
  yaml::read(root, "trials", cfg.trials, where);
  cfg.object = decode_settings(root["object"]);
  cfg.optics = yaml::decode_optics(root["optics"], cfg.optics);
  cfg.noise = yaml::decode_noise(root["noise"], cfg.noise);
  yaml::read(root, "aberration_wrms", cfg.aberration_wrms, where);
  yaml::read(root, "diversity_waves", cfg.diversity_waves, where);
  yaml::read(root, "estimator", cfg.estimator, where);
  cfg.gaussian = yaml::decode_gaussian(root["gaussian"], cfg.gaussian);
  cfg.poisson = yaml::decode_poisson(root["poisson"], cfg.poisson);
  yaml::read(root, "downscale", cfg.downscale, where);
  if (root["imsize_mode"]) {
    const auto mode = root["imsize_mode"].as<std::string>();
    if (mode == "crop") {
      cfg.imsize_mode = ImsizeMode::Crop;
    } else if (mode == "magnify") {
      cfg.imsize_mode = ImsizeMode::Magnify;
    } else {
      throw ConfigError("imsize_mode must be crop or magnify");
    }
  }
  if (root["sv_frequency"]) {
    const auto f = root["sv_frequency"].as<std::string>();
    if (f == "low") {
      cfg.sv_frequency = SpatialFrequency::Low;
    } else if (f == "high") {
      cfg.sv_frequency = SpatialFrequency::High;
    } else {
      throw ConfigError("sv_frequency must be low or high");
    }
  }
  cfg.correction = decode_correction(root["correction"], cfg.correction);
  yaml::read(root, "base_seed", cfg.base_seed, where);
  yaml::read(root, "output_dir", cfg.output_dir, where);
  yaml::read(root, "workers", cfg.workers, where);
  yaml::read(root, "max_failure_fraction", cfg.max_failure_fraction, where);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(text);
}

std::string to_yaml(const ExperimentConfig& cfg) {
  YAML::Node n;
  n["kind"] = to_string(cfg.kind);
  n["axis_values"] = cfg.axis_values;
  n["axis_values"].SetStyle(YAML::EmitterStyle::Flow);
  n["trials"] = cfg.trials;
  n["object"] = encode_settings(cfg.object);
  n["optics"] = yaml::encode(cfg.optics);
  n["noise"] = yaml::encode(cfg.noise);
  n["aberration_wrms"] = cfg.aberration_wrms;
  n["diversity_waves"] = cfg.diversity_waves;
  n["diversity_waves"].SetStyle(YAML::EmitterStyle::Flow);
  n["estimator"] = cfg.estimator;
  n["gaussian"] = yaml::encode(cfg.gaussian);
  n["poisson"] = yaml::encode(cfg.poisson);
  n["downscale"] = cfg.downscale;
  n["imsize_mode"] = cfg.imsize_mode == ImsizeMode::Crop ? "crop" : "magnify";
  n["sv_frequency"] = cfg.sv_frequency == SpatialFrequency::Low ? "low" : "high";
  n["correction"] = encode_correction(cfg.correction);
  n["base_seed"] = cfg.base_seed;
  n["output_dir"] = cfg.output_dir;
  n["workers"] = cfg.workers;
  n["max_failure_fraction"] = cfg.max_failure_fraction;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << n;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  // Only settings that change what a single trial computes take part, so that extending
  // the axis or the trial count reuses the trials already on disk.
  ExperimentConfig key = cfg;
  key.output_dir.clear();
  key.workers = 1;
  key.trials = 1;
  key.max_failure_fraction = 0.0;
  if (cfg.kind != ExperimentKind::ImsizeSweep) key.axis_values = {0.0};
  return hex64(fnv1a(to_yaml(key)));
}

// --- trial records ------------------------------------------------------------

namespace {

constexpr const char* kTrialHeader =
    "trial,seed,axis_value,estimator,rwe,ssim,initial_wrms,wall_time,converged,iterations,ok,reason";

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string clean(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s) {
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

std::string trials_csv(const std::vector<TrialRecord>& records) {
  std::string out = std::string(kTrialHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + num(r.axis_value) + "," + clean(r.estimator) +
           "," + num(r.rwe) + "," + num(r.ssim) + "," + num(r.initial_wrms) + "," + num(r.wall_time) + "," +
           (r.converged ? "1" : "0") + "," + std::to_string(r.iterations) + "," + (r.ok ? "1" : "0") + "," +
           clean(r.reason) + "\n";
  }
  return out;
}

std::vector<TrialRecord> parse_trials_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trial CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrialHeader) throw std::invalid_argument("trial CSV header does not match the schema");
  std::vector<TrialRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 12) throw std::invalid_argument("trial CSV row " + std::to_string(row) + ": expected 12 columns");
    try {
      TrialRecord r;
      r.trial = std::stoi(c[0]);
      r.seed = std::stoull(c[1]);
      r.axis_value = to_double(c[2]);
      r.estimator = c[3];
      r.rwe = to_double(c[4]);
      r.ssim = to_double(c[5]);
      r.initial_wrms = to_double(c[6]);
      r.wall_time = to_double(c[7]);
      r.converged = c[8] == "1";
      r.iterations = std::stoi(c[9]);
      r.ok = c[10] == "1";
      r.reason = c[11];
      records.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("trial CSV row " + std::to_string(row) + ": malformed value");
    }
  }
  return records;
}

const SweepPoint* SweepResult::find(double axis_value, const std::string& estimator) const {
  for (const auto& p : points) {
    if (p.estimator == estimator && std::abs(p.axis_value - axis_value) <= 1e-12 * std::max(1.0, std::abs(axis_value))) {
      return &p;
    }
  }
  return nullptr;
}

std::vector<std::string> SweepResult::estimators() const {
  std::vector<std::string> names;
  for (const auto& p : points) {
    if (std::find(names.begin(), names.end(), p.estimator) == names.end()) names.push_back(p.estimator);
  }
  return names;
}

SweepResult aggregate(const std::vector<TrialRecord>& records) {
  SweepResult result;
  result.records = records;
  const bool use_ssim =
      std::any_of(records.begin(), records.end(), [](const auto& r) { return r.ok && std::isfinite(r.ssim); });
  result.metric = use_ssim ? "ssim" : "rwe";

  std::vector<std::string> order;
  std::map<std::pair<double, std::string>, SweepPoint> groups;
  std::set<std::pair<int, double>> failed;
  for (const auto& r : records) {
    if (!r.ok) {
      failed.insert({r.trial, r.axis_value});
      continue;
    }
    const double v = use_ssim ? r.ssim : r.rwe;
    if (!std::isfinite(v)) continue;
    if (std::find(order.begin(), order.end(), r.estimator) == order.end()) order.push_back(r.estimator);
    auto& p = groups[{r.axis_value, r.estimator}];
    p.axis_value = r.axis_value;
    p.estimator = r.estimator;
    p.trials.push_back(r.trial);
    p.values.push_back(v);
    p.mean_wall_time += r.wall_time;
  }
  result.failed_trials = static_cast<int>(failed.size());

  for (const auto& name : order) {
    for (auto& [key, p] : groups) {
      if (key.second != name) continue;
      const double n = static_cast<double>(p.values.size());
      double sum = 0.0;
      for (double v : p.values) sum += v;
      p.mean = sum / n;
      double ss = 0.0;
      for (double v : p.values) ss += (v - p.mean) * (v - p.mean);
      p.standard_error = p.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
      p.mean_wall_time /= n;
      result.points.push_back(p);
    }
  }
  return result;
}

std::string aggregate_csv(const SweepResult& result) {
  std::string out = "axis_value,estimator,metric,count,mean,standard_error,mean_wall_time\n";
  for (const auto& p : result.points) {
    out += num(p.axis_value) + "," + clean(p.estimator) + "," + result.metric + "," + std::to_string(p.values.size()) +
           "," + num(p.mean) + "," + num(p.standard_error) + "," + num(p.mean_wall_time) + "\n";
  }
  return out;
}

// --- trials -------------------------------------------------------------------

OpticalConfig trial_optics(const ExperimentConfig& cfg, double axis_value) {
  if (cfg.kind != ExperimentKind::ImsizeSweep) return cfg.optics;
  const int n = static_cast<int>(std::lround(axis_value));
  OpticalConfig o = cfg.optics.with_grid_size(n);
  if (cfg.imsize_mode == ImsizeMode::Magnify) {
    o.pixel_pitch = cfg.optics.pixel_pitch * static_cast<double>(max_axis_size(cfg)) / n;
  }
  return o;
}

namespace {

double trial_wrms(const ExperimentConfig& cfg, double axis_value) {
  return cfg.kind == ExperimentKind::AbmagSweep || cfg.kind == ExperimentKind::Single ? axis_value
                                                                                      : cfg.aberration_wrms;
}

NoiseParams trial_noise(const ExperimentConfig& cfg, double axis_value) {
  NoiseParams noise = cfg.noise;
  if (cfg.kind == ExperimentKind::NoiseSweep || cfg.kind == ExperimentKind::CorrectionCompare) {
    noise.photons_per_pixel = axis_value;
  }
  return noise;
}

RealField block_mean(const RealField& image, int factor) {
  RealField out(image.rows() / factor, image.cols() / factor);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      out(r, c) = image.block(r * factor, c * factor, factor, factor).mean();
    }
  }
  return out;
}

/// Object canvas for one trial, sized for the trial's image.
RealField trial_object(const ExperimentConfig& cfg, double axis_value, std::uint64_t seed) {
  if (cfg.kind != ExperimentKind::ImsizeSweep) {
    return generate_object(cfg.object.resolve(cfg.optics.grid_size, seed));
  }
  // Every size sees the same scene: generated once at the largest size, then either
  // cropped (constant magnification) or binned (constant field of view).
  const int big = max_axis_size(cfg);
  const int n = static_cast<int>(std::lround(axis_value));
  const RealField full = generate_object(cfg.object.resolve(big, seed));
  if (cfg.imsize_mode == ImsizeMode::Magnify) return block_mean(full, big / n);
  const Eigen::Index off = (full.rows() - 2 * n) / 2;
  return full.block(off, off, 2 * n, 2 * n);
}

struct TrialInputs {
  OpticalConfig optics;
  RealField object;
  AberrationSample truth;
  Rng rng;
};

TrialInputs prepare_trial(const ExperimentConfig& cfg, double axis_value, std::uint64_t seed) {
  TrialInputs in{trial_optics(cfg, axis_value), trial_object(cfg, axis_value, seed), {}, Rng(seed)};
  const FrequencyGrid grid(in.optics);
  in.truth = sample_aberration(trial_wrms(cfg, axis_value), in.rng, grid);
  return in;
}

std::vector<int> estimated_indices(const ExperimentConfig& cfg, const std::string& estimator) {
  return estimator == "gaussian" ? cfg.gaussian.estimated_indices : cfg.poisson.estimated_indices;
}

EstimationResult run_estimator(const ExperimentConfig& cfg, const std::string& name, const DiversityStack& stack) {
  return name == "gaussian" ? estimate_gaussian(stack, cfg.gaussian) : estimate_poisson(stack, cfg.poisson);
}

}  // namespace

DiversityStack simulate_trial_stack(const ExperimentConfig& cfg, double axis_value, std::uint64_t seed) {
  const NoiseParams noise = trial_noise(cfg, axis_value);
  if (cfg.kind == ExperimentKind::SvStudy) {
    // The tiled simulator generates the object from its spec itself.
    const OpticalConfig optics = trial_optics(cfg, axis_value);
    const FrequencyGrid grid(optics);
    Rng rng(seed);
    const AberrationSample truth = sample_aberration(cfg.aberration_wrms, rng, grid);
    const SpatialVarianceParams sv{axis_value, cfg.sv_frequency};
    DiversityStack stack = simulate_spatially_variant_stack(cfg.object.resolve(optics.grid_size, seed), truth, sv,
                                                            cfg.diversity_z(optics), noise, optics, rng);
    stack.seed = seed;
    return stack;
  }
  TrialInputs in = prepare_trial(cfg, axis_value, seed);
  const auto z = cfg.diversity_z(in.optics);
  DiversityStack stack;
  if (cfg.kind == ExperimentKind::PhaseNoiseSweep) {
    const auto wavefronts = apply_phase_noise(in.truth.coeffs, z, PhaseNoiseParams{axis_value}, in.rng);
    stack = simulate_stack_per_image(in.object, in.truth, wavefronts, z, noise, in.optics, in.rng);
  } else {
    stack = simulate_stack(in.object, in.truth, z, noise, in.optics, in.rng);
  }
  stack.seed = seed;
  return stack;
}

std::vector<TrialRecord> run_trial(const ExperimentConfig& cfg, double axis_value, int trial) {
  const std::uint64_t seed = trial_seed(cfg, trial);
  std::vector<TrialRecord> records;
  auto base = [&](const std::string& name) {
    TrialRecord r;
    r.trial = trial;
    r.seed = seed;
    r.axis_value = axis_value;
    r.estimator = name;
    return r;
  };

  if (cfg.kind == ExperimentKind::CorrectionCompare) {
    TrialInputs in = prepare_trial(cfg, axis_value, seed);
    CorrectionOptions opts = cfg.correction;
    opts.gaussian = cfg.gaussian;
    opts.poisson = cfg.poisson;
    const auto t0 = std::chrono::steady_clock::now();
    const CorrectionReport rep = compare_correction(in.object, in.truth, trial_noise(cfg, axis_value), in.optics,
                                                    opts, in.rng);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const FrequencyGrid grid(in.optics);
    const auto norms = relative_zernike_norms(4, 45, grid);
    const double initial =
        wrms(in.truth.coeffs.restricted_to(estimated_indices(cfg, opts.estimator)), norms);
    const std::pair<const char*, double> rows[] = {
        {"deconvolved", rep.ssim_deconvolved}, {"reacquired", rep.ssim_reacquired}, {"uncorrected", rep.ssim_uncorrected}};
    for (const auto& [name, value] : rows) {
      TrialRecord r = base(name);
      r.ssim = value;
      r.initial_wrms = initial;
      r.rwe = std::string(name) == "deconvolved" ? rep.rwe_used
              : std::string(name) == "reacquired" ? rep.rwe_reacquisition
                                                  : initial;
      r.wall_time = elapsed;
      r.converged = true;
      records.push_back(r);
    }
    return records;
  }

  const DiversityStack stack = simulate_trial_stack(cfg, axis_value, seed);
  const AberrationSample& truth = *stack.truth;
  const FrequencyGrid grid(stack.config);
  const auto norms = relative_zernike_norms(4, 45, grid);

  for (const auto& name : cfg.estimators()) {
    const auto indices = estimated_indices(cfg, name);
    const ZernikeVector target = truth.coeffs.restricted_to(indices);
    const double initial = wrms(target, norms);
    auto record = [&](const std::string& label, const EstimationResult& res) {
      TrialRecord r = base(label);
      r.rwe = rwe(res.coeffs.restricted_to(indices), target, norms);
      r.initial_wrms = initial;
      r.wall_time = res.wall_time;
      r.converged = res.converged;
      r.iterations = res.iterations;
      r.reason = res.reason;
      return r;
    };
    records.push_back(record(name, run_estimator(cfg, name, stack)));
    if (cfg.downscale) {
      const DiversityStack small = downscale_stack(stack, name == "poisson");
      const auto t0 = std::chrono::steady_clock::now();
      EstimationResult res = run_estimator(cfg, name, small);
      // Binning is part of the downscaled pipeline's cost.
      res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      records.push_back(record(name + "-downscaled", res));
    }
  }
  return records;
}

// --- experiment runner ------------------------------------------------------------

namespace {

struct Task {
  double axis_value;
  int trial;
};

std::string trial_key(const std::string& hash, const Task& t, std::uint64_t seed) {
  return hex64(fnv1a(hash + "|" + num(t.axis_value) + "|" + std::to_string(seed)));
}

std::string plot_title(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::AbmagSweep: return "RWE VS ABERRATION MAGNITUDE";
    case ExperimentKind::NoiseSweep: return "RWE VS PHOTON LEVEL";
    case ExperimentKind::ImsizeSweep: return "RWE VS IMAGE SIZE";
    case ExperimentKind::SvStudy: return "RWE VS SPATIAL VARIANCE";
    case ExperimentKind::PhaseNoiseSweep: return "RWE VS PHASE NOISE";
    case ExperimentKind::CorrectionCompare: return "SSIM VS PHOTON LEVEL";
    case ExperimentKind::Single: return "RWE";
  }
  return "";
}

std::string axis_label(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::AbmagSweep:
    case ExperimentKind::Single: return "ABERRATION WRMS (WAVES)";
    case ExperimentKind::NoiseSweep:
    case ExperimentKind::CorrectionCompare: return "PHOTONS PER PIXEL";
    case ExperimentKind::ImsizeSweep: return "IMAGE SIZE (PX)";
    case ExperimentKind::SvStudy: return "SV MAGNITUDE";
    case ExperimentKind::PhaseNoiseSweep: return "PHASE NOISE SIGMA (RAD)";
  }
  return "";
}

void write_manifest(const ExperimentConfig& cfg, const SweepResult& result, int cached, const std::string& status,
                    const std::vector<std::string>& failures) {
  YAML::Node n;
  n["status"] = status;
  n["config_hash"] = config_hash(cfg);
  n["planned_trials"] = result.planned_trials;
  n["failed_trials"] = result.failed_trials;
  n["cached_trials"] = cached;
  n["metric"] = result.metric;
  for (const auto& f : failures) n["failures"].push_back(f);
  n["config"] = YAML::Load(to_yaml(cfg));
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << n;
  write_text_atomic(fs::path(cfg.output_dir) / "manifest.yaml", std::string(out.c_str()) + "\n");
}

}  // namespace

SweepResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out_dir(cfg.output_dir);
  const fs::path trial_dir = out_dir / "trials";
  fs::create_directories(trial_dir);
  const std::string hash = config_hash(cfg);

  std::vector<Task> tasks;
  for (double a : cfg.axis_values) {
    for (int t = 0; t < cfg.trials; ++t) tasks.push_back({a, t});
  }
  const int planned = static_cast<int>(tasks.size());
  const int allowed_failures = static_cast<int>(std::floor(cfg.max_failure_fraction * planned));

  std::vector<std::vector<TrialRecord>> results(tasks.size());
  std::vector<std::string> failures;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<int> failed{0}, cached{0}, done{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    for (;;) {
      if (abort) return;
      const std::size_t i = next++;
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const std::uint64_t seed = trial_seed(cfg, task.trial);
      const fs::path file = trial_dir / ("trial_" + trial_key(hash, task, seed) + ".csv");
      if (fs::exists(file)) {
        try {
          results[i] = parse_trials_csv(read_text(file));
          ++cached;
          ++done;
          continue;
        } catch (const std::exception&) {
          spdlog::warn("ignoring unreadable trial file {}", file.string());
        }
      }
      try {
        results[i] = run_trial(cfg, task.axis_value, task.trial);
        write_text_atomic(file, trials_csv(results[i]));
      } catch (const std::exception& e) {
        TrialRecord r;
        r.trial = task.trial;
        r.seed = seed;
        r.axis_value = task.axis_value;
        r.estimator = "none";
        r.ok = false;
        r.reason = e.what();
        results[i] = {r};
        const int f = ++failed;
        {
          std::lock_guard lock(mutex);
          failures.push_back("axis " + num(task.axis_value) + " trial " + std::to_string(task.trial) + ": " + e.what());
        }
        spdlog::warn("trial {} at {} failed: {}", task.trial, task.axis_value, e.what());
        if (f > allowed_failures) abort = true;
      }
      const int d = ++done;
      spdlog::info("[{}/{}] axis {} trial {} done", d, planned, task.axis_value, task.trial);
    }
  };

  spdlog::info("{}: {} trials over {} axis values, {} worker(s)", to_string(cfg.kind), planned,
               cfg.axis_values.size(), cfg.workers);
  std::vector<std::thread> pool;
  for (int w = 1; w < cfg.workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<TrialRecord> records;
  for (const auto& r : results) records.insert(records.end(), r.begin(), r.end());
  SweepResult result = aggregate(records);
  result.planned_trials = planned;

  write_text_atomic(out_dir / "trials.csv", trials_csv(records));
  if (abort) {
    write_manifest(cfg, result, cached, "aborted", failures);
    throw ExcessiveFailures(std::to_string(failed.load()) + " of " + std::to_string(planned) +
                            " trials failed (limit " + std::to_string(allowed_failures) + ")");
  }
  write_text_atomic(out_dir / "aggregate.csv", aggregate_csv(result));
  if (!result.points.empty()) {
    PlotSpec spec = sweep_plot(result, plot_title(cfg.kind), axis_label(cfg.kind));
    spec.log_x = cfg.kind == ExperimentKind::NoiseSweep || cfg.kind == ExperimentKind::CorrectionCompare;
    render_plot(spec, out_dir / (result.metric + ".png"));
    if (cfg.kind == ExperimentKind::ImsizeSweep) {
      PlotSpec runtime = sweep_plot(result, "RUNTIME VS IMAGE SIZE", axis_label(cfg.kind), true);
      render_plot(runtime, out_dir / "runtime.png");
    }
  }
  write_manifest(cfg, result, cached, "complete", failures);
  return result;
}

SweepResult run_imsize_experiment(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::ImsizeSweep) throw ConfigError("run_imsize_experiment needs kind imsize-sweep");
  return run_experiment(cfg);
}

}  // namespace phasediv
