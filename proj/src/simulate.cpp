#include "phasediv/simulate.hpp"

#include "phasediv/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phasediv {

std::string to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::CellsDense: return "cells-dense";
    case ObjectKind::CellsSparse: return "cells-sparse";
    case ObjectKind::Filaments: return "filaments";
    case ObjectKind::Texture: return "texture";
  }
  return "unknown";
}

ObjectKind parse_object_kind(const std::string& name) {
  if (name == "cells-dense") return ObjectKind::CellsDense;
  if (name == "cells-sparse") return ObjectKind::CellsSparse;
  if (name == "filaments") return ObjectKind::Filaments;
  if (name == "texture") return ObjectKind::Texture;
  throw ConfigError("unknown object kind '" + name + "'");
}

ObjectSpec ObjectSpec::preset(ObjectKind kind, int canvas_size, std::uint64_t seed) {
  ObjectSpec spec;
  spec.kind = kind;
  spec.canvas_size = canvas_size;
  spec.seed = seed;
  const double area = static_cast<double>(canvas_size) * canvas_size;
  switch (kind) {
    case ObjectKind::CellsDense:
      spec.feature_scale = 10.0;
      spec.cell_count = static_cast<int>(0.9 * area / (std::numbers::pi * 100.0));
      spec.texture_strength = 0.6;
      break;
    case ObjectKind::CellsSparse:
      spec.feature_scale = 10.0;
      spec.cell_count = static_cast<int>(0.06 * area / (std::numbers::pi * 100.0));
      spec.texture_strength = 0.4;
      break;
    case ObjectKind::Filaments:
      spec.feature_scale = 1.2;
      spec.cell_count = std::max(1, canvas_size / 12);
      spec.texture_strength = 0.3;
      break;
    case ObjectKind::Texture:
      spec.feature_scale = 6.0;
      spec.cell_count = 0;
      spec.texture_strength = 1.0;
      break;
  }
  return spec;
}

void ObjectSpec::validate(int target_size) const {
  if (canvas_size < 2 * target_size) {
    throw ConfigError("object canvas must be at least twice the image size");
  }
  if (cell_count < 0) throw ConfigError("object: cell_count must be >= 0");
  if (support_size < 0) throw ConfigError("object: support_size must be >= 0");
  if (!(feature_scale > 0.0)) throw ConfigError("object: feature_scale must be positive");
  if (texture_strength < 0.0) throw ConfigError("object: texture_strength must be >= 0");
}

NoiseParams NoiseParams::low_additive(double photons_per_pixel) {
  return NoiseParams{0.6, photons_per_pixel, 1.0, 2.0, false};
}

NoiseParams NoiseParams::high_additive(double photons_per_pixel) {
  return NoiseParams{0.6, photons_per_pixel, 100.0, 20.0, false};
}

NoiseParams NoiseParams::none(double photons_per_pixel) {
  return NoiseParams{0.6, photons_per_pixel, 0.0, 0.0, true};
}

void NoiseParams::validate() const {
  if (!(quantum_efficiency > 0.0 && quantum_efficiency <= 1.0)) {
    throw ConfigError("noise: quantum_efficiency must lie in (0, 1]");
  }
  if (photons_per_pixel < 0.0 || dark_mean < 0.0 || read_sigma < 0.0) {
    throw ConfigError("noise: parameters must be nonnegative");
  }
}

// --- objects ----------------------------------------------------------------

namespace {

RealField gaussian_kernel(int n, double sigma) {
  RealField k(n, n);
  for (int r = 0; r < n; ++r) {
    const int y = r < n / 2 ? r : r - n;
    for (int c = 0; c < n; ++c) {
      const int x = c < n / 2 ? c : c - n;
      k(r, c) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
    }
  }
  return k / k.sum();
}

RealField blur(const RealField& image, double sigma) {
  return fft::convolve(image, gaussian_kernel(static_cast<int>(image.rows()), sigma));
}

// Band-limited noise rescaled to [0, 1].
RealField smooth_noise(int n, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RealField white(n, n);
  for (Eigen::Index i = 0; i < white.size(); ++i) white.data()[i] = normal(rng);
  RealField coarse = blur(white, scale);
  RealField fine = blur(white, scale / 3.0);
  RealField mix = coarse / std::sqrt((coarse * coarse).mean()) + 0.5 * fine / std::sqrt((fine * fine).mean());
  const double lo = mix.minCoeff();
  const double hi = mix.maxCoeff();
  return hi > lo ? RealField((mix - lo) / (hi - lo)) : RealField(RealField::Zero(n, n));
}

RealField draw_cells(const ObjectSpec& spec, Rng& rng) {
  const int n = spec.canvas_size;
  RealField out = RealField::Zero(n, n);
  if (spec.cell_count == 0) return out;
  RealField texture = smooth_noise(n, std::max(1.0, spec.feature_scale / 3.0), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < spec.cell_count; ++i) {
    const double cy = unit(rng) * n;
    const double cx = unit(rng) * n;
    const double a = spec.feature_scale * (0.7 + 0.6 * unit(rng));
    const double b = spec.feature_scale * (0.7 + 0.6 * unit(rng));
    const double angle = unit(rng) * std::numbers::pi;
    const double brightness = 0.4 + 0.6 * unit(rng);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const int reach = static_cast<int>(std::ceil(std::max(a, b))) + 1;
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const double py = std::floor(cy) + dy - cy;
        const double px = std::floor(cx) + dx - cx;
        const double u = (px * ca + py * sa) / a;
        const double v = (-px * sa + py * ca) / b;
        const double rr = u * u + v * v;
        if (rr > 1.0) continue;
        const int r = ((static_cast<int>(std::floor(cy)) + dy) % n + n) % n;
        const int c = ((static_cast<int>(std::floor(cx)) + dx) % n + n) % n;
        // Brighter rim than interior, modulated by the shared texture field.
        const double profile = 0.75 + 0.25 * rr;
        const double tex = 1.0 + spec.texture_strength * (texture(r, c) - 0.5) * 2.0;
        out(r, c) = std::max(out(r, c), brightness * profile * std::max(tex, 0.0));
      }
    }
  }
  return blur(out, 1.0);
}

RealField draw_filaments(const ObjectSpec& spec, Rng& rng) {
  const int n = spec.canvas_size;
  RealField out = RealField::Zero(n, n);
  if (spec.cell_count == 0) return out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> turn(0.0, 0.06);
  const int steps = n;
  for (int f = 0; f < spec.cell_count; ++f) {
    double y = unit(rng) * n;
    double x = unit(rng) * n;
    double heading = unit(rng) * 2.0 * std::numbers::pi;
    const double brightness = 0.5 + 0.5 * unit(rng);
    for (int s = 0; s < steps; ++s) {
      heading += turn(rng);
      y += std::sin(heading);
      x += std::cos(heading);
      const double fy = std::floor(y);
      const double fx = std::floor(x);
      const double wy = y - fy;
      const double wx = x - fx;
      const int r0 = ((static_cast<int>(fy)) % n + n) % n;
      const int c0 = ((static_cast<int>(fx)) % n + n) % n;
      const int r1 = (r0 + 1) % n;
      const int c1 = (c0 + 1) % n;
      out(r0, c0) += brightness * (1 - wy) * (1 - wx);
      out(r0, c1) += brightness * (1 - wy) * wx;
      out(r1, c0) += brightness * wy * (1 - wx);
      out(r1, c1) += brightness * wy * wx;
    }
  }
  out = blur(out, spec.feature_scale);
  if (spec.texture_strength > 0.0) {
    RealField texture = smooth_noise(n, 8.0, rng);
    out *= (1.0 + spec.texture_strength * (texture - 0.5) * 2.0).max(0.0);
  }
  return out;
}

RealField draw_texture(const ObjectSpec& spec, Rng& rng) {
  const int n = spec.canvas_size;
  RealField t = smooth_noise(n, spec.feature_scale, rng);
  // Contrast-stretch so dark regions reach zero.
  RealField shaped = ((t - 0.35) / 0.65).max(0.0).pow(1.0 + spec.texture_strength);
  return shaped;
}

}  // namespace

RealField generate_object(const ObjectSpec& spec) {
  if (spec.canvas_size < 2) throw ConfigError("object: canvas too small");
  Rng rng(spec.seed);
  RealField out;
  switch (spec.kind) {
    case ObjectKind::CellsDense:
    case ObjectKind::CellsSparse: out = draw_cells(spec, rng); break;
    case ObjectKind::Filaments: out = draw_filaments(spec, rng); break;
    case ObjectKind::Texture: out = draw_texture(spec, rng); break;
  }
  out = out.max(0.0);
  if (spec.support_size > 0 && spec.support_size < spec.canvas_size) {
    const int lo = (spec.canvas_size - spec.support_size) / 2;
    const int hi = lo + spec.support_size;
    for (int r = 0; r < spec.canvas_size; ++r) {
      for (int c = 0; c < spec.canvas_size; ++c) {
        if (r < lo || r >= hi || c < lo || c >= hi) out(r, c) = 0.0;
      }
    }
  }
  const double peak = out.maxCoeff();
  if (peak > 0.0) out /= peak;
  return out;
}

// --- aberrations ------------------------------------------------------------

AberrationSample sample_aberration(double target_wrms, Rng& rng, const FrequencyGrid& grid) {
  if (!(target_wrms >= 0.0)) throw ConfigError("sample_aberration: target_wrms must be >= 0");
  static constexpr int kFirst = 4;
  static constexpr int kSplit = 15;
  static constexpr int kLast = 45;
  const ZernikeNorms norms = relative_zernike_norms(kFirst, kLast, grid);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  auto draw_block = [&](int first, int last, double target) {
    ZernikeVector block;
    for (;;) {
      block = ZernikeVector{};
      for (int j = first; j <= last; ++j) block.set(j, unit(rng));
      const double w = wrms(block, norms);
      if (w > 0.0) {
        block *= target / w;
        return block;
      }
    }
  };

  AberrationSample sample;
  sample.target_wrms = target_wrms;
  sample.coeffs = draw_block(kFirst, kSplit, target_wrms);
  sample.coeffs += draw_block(kSplit + 1, kLast, target_wrms / 2.0);
  return sample;
}

// --- image formation --------------------------------------------------------

RealField convolve_cropped(const RealField& object, const Psf& psf) {
  const Eigen::Index m = object.rows();
  const Eigen::Index n = psf.intensities.rows();
  if (object.cols() != m || psf.intensities.cols() != n) {
    throw std::invalid_argument("convolve_cropped: square fields required");
  }
  if (n % 2 != 0 || m < 2 * n || (m - n) % 2 != 0) {
    throw ConfigError("convolve_cropped: canvas must be >= 2x the PSF grid to keep the wrap-around outside the crop");
  }
  RealField kernel = RealField::Zero(m, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index dy = r < n / 2 ? r : r - n;
    const Eigen::Index rr = (dy + m) % m;
    for (Eigen::Index c = 0; c < n; ++c) {
      const Eigen::Index dx = c < n / 2 ? c : c - n;
      kernel(rr, (dx + m) % m) = psf.intensities(r, c);
    }
  }
  RealField full = fft::convolve(object, kernel);
  const Eigen::Index offset = (m - n) / 2;
  return full.block(offset, offset, n, n);
}

RealField form_image(const RealField& object, const ZernikeVector& wavefront, double z, const FrequencyGrid& grid) {
  std::vector<double> phase = phase_pupil(wavefront, grid);
  const std::vector<double> defocus = defocus_pupil(z, grid);
  for (std::size_t i = 0; i < phase.size(); ++i) phase[i] += defocus[i];
  return convolve_cropped(object, unit_psf_from_pupil_phase(phase, grid));
}

RealField apply_noise(const RealField& image, const NoiseParams& noise, Rng& rng) {
  noise.validate();
  if ((image < 0.0).any()) throw std::invalid_argument("apply_noise: expected-photon image must be nonnegative");
  const double mean = image.mean();
  RealField expected = mean > 0.0 ? RealField(image * (noise.photons_per_pixel / mean))
                                  : RealField(RealField::Zero(image.rows(), image.cols()));
  if (noise.noiseless) return noise.quantum_efficiency * expected + noise.dark_mean;

  RealField out(image.rows(), image.cols());
  std::normal_distribution<double> read(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double photons = expected.data()[i];
    double value = 0.0;
    if (photons > 0.0) {
      std::poisson_distribution<long long> shot(photons);
      value += noise.quantum_efficiency * static_cast<double>(shot(rng));
    }
    if (noise.dark_mean > 0.0) {
      std::poisson_distribution<long long> dark(noise.dark_mean);
      value += static_cast<double>(dark(rng));
    }
    if (noise.read_sigma > 0.0) value += noise.read_sigma * read(rng);
    out.data()[i] = value;
  }
  return out;
}

DiversityStack simulate_stack_per_image(const RealField& object, const AberrationSample& aberration,
                                        std::span<const ZernikeVector> wavefronts,
                                        std::span<const double> diversity_z, const NoiseParams& noise,
                                        const OpticalConfig& config, Rng& rng) {
  if (wavefronts.size() != diversity_z.size()) {
    throw std::invalid_argument("simulate_stack: one wavefront per diversity plane required");
  }
  const FrequencyGrid grid(config);
  noise.validate();
  DiversityStack stack;
  stack.config = config;
  stack.diversity_z.assign(diversity_z.begin(), diversity_z.end());
  stack.truth = aberration;
  for (std::size_t k = 0; k < diversity_z.size(); ++k) {
    RealField clean = form_image(object, wavefronts[k], diversity_z[k], grid);
    stack.images.push_back(apply_noise(clean.max(0.0), noise, rng));
  }
  return stack;
}

DiversityStack simulate_stack(const RealField& object, const AberrationSample& aberration,
                              std::span<const double> diversity_z, const NoiseParams& noise,
                              const OpticalConfig& config, Rng& rng) {
  std::vector<ZernikeVector> wavefronts(diversity_z.size(), aberration.coeffs);
  return simulate_stack_per_image(object, aberration, wavefronts, diversity_z, noise, config, rng);
}

DiversityStack simulate_stack(const ObjectSpec& spec, const AberrationSample& aberration,
                              std::span<const double> diversity_z, const NoiseParams& noise,
                              const OpticalConfig& config, Rng& rng) {
  spec.validate(config.grid_size);
  DiversityStack stack = simulate_stack(generate_object(spec), aberration, diversity_z, noise, config, rng);
  stack.seed = spec.seed;
  return stack;
}

// --- degradations -----------------------------------------------------------

std::vector<ZernikeVector> spatial_variance_perturbations(const ZernikeVector& aberration,
                                                          const SpatialVarianceParams& sv, Rng& rng) {
  if (sv.magnitude < 0.0) throw ConfigError("spatial variance: magnitude must be >= 0");
  const int tiles = sv.tiles_per_axis() * sv.tiles_per_axis();
  const auto indices = aberration.indices();
  double rms = 0.0;
  for (const auto& [j, v] : aberration) rms += v * v;
  rms = indices.empty() ? 0.0 : std::sqrt(rms / static_cast<double>(indices.size()));

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> draws(tiles, std::vector<double>(indices.size()));
  for (auto& d : draws) {
    for (auto& v : d) v = normal(rng);
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    double mean = 0.0;
    for (const auto& d : draws) mean += d[i];
    mean /= tiles;
    for (auto& d : draws) d[i] -= mean;
  }
  std::vector<ZernikeVector> out(tiles);
  for (int t = 0; t < tiles; ++t) {
    for (std::size_t i = 0; i < indices.size(); ++i) out[t].set(indices[i], sv.magnitude * rms * draws[t][i]);
  }
  return out;
}

RealField tile_weight(int n, int tiles_per_axis, int ty, int tx) {
  const double spacing = static_cast<double>(n) / tiles_per_axis;
  auto axis_weight = [&](int tile, int pos) {
    const double center = (tile + 0.5) * spacing;
    const double x = pos + 0.5;
    // Beyond the outermost tile centers the edge tile owns the whole weight.
    if ((tile == 0 && x <= center) || (tile == tiles_per_axis - 1 && x >= center)) return 1.0;
    const double d = std::abs(x - center) / spacing;
    if (d >= 1.0) return 0.0;
    const double c = std::cos(0.5 * std::numbers::pi * d);
    return c * c;
  };
  RealField w(n, n);
  for (int r = 0; r < n; ++r) {
    const double wy = axis_weight(ty, r);
    for (int c = 0; c < n; ++c) w(r, c) = wy * axis_weight(tx, c);
  }
  return w;
}

DiversityStack simulate_spatially_variant_stack(const ObjectSpec& spec, const AberrationSample& aberration,
                                                const SpatialVarianceParams& sv,
                                                std::span<const double> diversity_z, const NoiseParams& noise,
                                                const OpticalConfig& config, Rng& rng) {
  if (sv.magnitude < 0.0) throw ConfigError("spatial variance: magnitude must be >= 0");
  if (sv.magnitude == 0.0) return simulate_stack(spec, aberration, diversity_z, noise, config, rng);

  const int n = config.grid_size;
  const int per_axis = sv.tiles_per_axis();
  // Tiles must be wider than a few diffraction-limited resolution elements.
  const double resolution_px = 0.61 * config.wavelength / config.na / config.pixel_pitch;
  if (static_cast<double>(n) / per_axis < 4.0 * resolution_px) {
    throw ConfigError("spatial variance: tiles smaller than the PSF core");
  }
  spec.validate(n);
  noise.validate();
  const FrequencyGrid grid(config);
  const RealField object = generate_object(spec);
  const auto perturbations = spatial_variance_perturbations(aberration.coeffs, sv, rng);

  std::vector<RealField> weights;
  for (int ty = 0; ty < per_axis; ++ty) {
    for (int tx = 0; tx < per_axis; ++tx) weights.push_back(tile_weight(n, per_axis, ty, tx));
  }

  DiversityStack stack;
  stack.config = config;
  stack.diversity_z.assign(diversity_z.begin(), diversity_z.end());
  stack.truth = aberration;
  stack.seed = spec.seed;
  for (double z : diversity_z) {
    RealField clean = RealField::Zero(n, n);
    for (std::size_t t = 0; t < perturbations.size(); ++t) {
      clean += weights[t] * form_image(object, aberration.coeffs + perturbations[t], z, grid);
    }
    stack.images.push_back(apply_noise(clean.max(0.0), noise, rng));
  }
  return stack;
}

std::vector<ZernikeVector> apply_phase_noise(const ZernikeVector& aberration, std::span<const double> diversity_z,
                                             const PhaseNoiseParams& pn, Rng& rng) {
  const std::size_t k_count = diversity_z.size();
  if (k_count < 2) throw ConfigError("phase noise: at least two diversity images required");
  if (pn.sigma < 0.0) throw ConfigError("phase noise: sigma must be >= 0");
  std::vector<ZernikeVector> out(k_count, aberration);
  if (pn.sigma == 0.0) return out;

  const auto indices = aberration.indices();
  std::normal_distribution<double> normal(0.0, pn.sigma);
  std::vector<std::vector<double>> draws(k_count, std::vector<double>(indices.size()));
  for (auto& d : draws) {
    for (auto& v : d) v = normal(rng);
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    double mean = 0.0;
    for (const auto& d : draws) mean += d[i];
    mean /= static_cast<double>(k_count);
    for (auto& d : draws) d[i] -= mean;
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < indices.size(); ++i) out[k].set(indices[i], aberration.get(indices[i]) + draws[k][i]);
  }
  return out;
}

RealField normalize_for_display(const RealField& image) {
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  if (!(hi > lo)) return RealField::Zero(image.rows(), image.cols());
  return (image - lo) / (hi - lo);
}

// --- stack helpers ----------------------------------------------------------

void DiversityStack::validate() const {
  if (images.size() < 2) throw ConfigError("stack: at least two diversity images required");
  if (images.size() != diversity_z.size()) throw ConfigError("stack: image count does not match diversity count");
  config.validate();
  for (const auto& im : images) {
    if (im.rows() != config.grid_size || im.cols() != config.grid_size) {
      throw ConfigError("stack: image shape does not match grid_size");
    }
  }
  bool distinct = false;
  for (std::size_t a = 0; a < diversity_z.size() && !distinct; ++a) {
    for (std::size_t b = a + 1; b < diversity_z.size(); ++b) {
      if (diversity_z[a] != diversity_z[b]) {
        distinct = true;
        break;
      }
    }
  }
  if (!distinct) throw ConfigError("stack: diversity offsets must not all be equal");
}

std::vector<double> default_diversity(const OpticalConfig& config) {
  return {3.0 * config.wavelength, 0.0, -3.0 * config.wavelength};
}

DiversityStack downscale_stack(const DiversityStack& stack, bool photon_counts) {
  if (!stack.config.nyquist_sampled()) {
    throw ConfigError("downscale: stack is sampled below Nyquist; downscaling would alias");
  }
  DiversityStack out = stack;
  out.config = stack.config.downscaled();
  for (auto& im : out.images) im = photon_counts ? downscale_sum(im) : downscale_mean(im);
  return out;
}

}  // namespace phasediv
