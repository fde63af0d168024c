#include "phasediv/io.hpp"

#include "yaml_convert.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace phasediv {

namespace fs = std::filesystem;

// --- TIFF -------------------------------------------------------------------

namespace {

constexpr std::uint16_t kShort = 3;
constexpr std::uint16_t kLong = 4;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class TiffReader {
 public:
  explicit TiffReader(std::string bytes, const fs::path& path) : data_(std::move(bytes)), path_(path) {
    if (data_.size() < 8) fail("file too short");
    if (data_.compare(0, 2, "II") == 0) {
      little_ = true;
    } else if (data_.compare(0, 2, "MM") == 0) {
      little_ = false;
    } else {
      fail("not a TIFF file");
    }
    if (u16(2) != 42) fail("BigTIFF and other variants are not supported");
  }

  RealField read_first_image() {
    const std::uint32_t ifd = u32(4);
    const std::uint16_t entries = u16(ifd);
    std::uint32_t width = 0, height = 0, bits = 1, compression = 1, samples = 1, format = 1;
    std::uint32_t rows_per_strip = 0;
    std::vector<std::uint32_t> offsets, counts;
    for (std::uint16_t e = 0; e < entries; ++e) {
      const std::size_t at = ifd + 2 + 12u * e;
      const std::uint16_t tag = u16(at);
      const std::uint16_t type = u16(at + 2);
      const std::uint32_t count = u32(at + 4);
      auto values = [&] { return read_values(at, type, count); };
      switch (tag) {
        case 256: width = values().at(0); break;
        case 257: height = values().at(0); break;
        case 258: bits = values().at(0); break;
        case 259: compression = values().at(0); break;
        case 273: offsets = values(); break;
        case 277: samples = values().at(0); break;
        case 278: rows_per_strip = values().at(0); break;
        case 279: counts = values(); break;
        case 339: format = values().at(0); break;
        default: break;
      }
    }
    if (width == 0 || height == 0) fail("missing image dimensions");
    if (compression != 1) fail("compressed TIFF is not supported");
    if (samples != 1) fail("only single-channel images are supported");
    if (offsets.empty() || offsets.size() != counts.size()) fail("bad strip layout");
    if (rows_per_strip == 0) rows_per_strip = height;
    const bool ok_format = (format == 3 && (bits == 32 || bits == 64)) ||
                           ((format == 1 || format == 2) && (bits == 8 || bits == 16 || bits == 32));
    if (!ok_format) fail("unsupported sample format");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t row_bytes = width * bytes_per_sample;
    RealField image(height, width);
    std::uint32_t row = 0;
    for (std::size_t s = 0; s < offsets.size() && row < height; ++s) {
      const std::uint32_t strip_rows = std::min(rows_per_strip, height - row);
      if (static_cast<std::size_t>(offsets[s]) + strip_rows * row_bytes > data_.size()) fail("strip beyond end of file");
      for (std::uint32_t r = 0; r < strip_rows; ++r, ++row) {
        const std::size_t base = offsets[s] + r * row_bytes;
        for (std::uint32_t c = 0; c < width; ++c) image(row, c) = sample(base + c * bytes_per_sample, bits, format);
      }
    }
    if (row != height) fail("strips do not cover the image");
    return image;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("TIFF " + path_.string() + ": " + what);
  }

  std::uint64_t raw(std::size_t at, int n) const {
    if (at + n > data_.size()) fail("truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const auto byte = static_cast<std::uint8_t>(data_[at + (little_ ? i : n - 1 - i)]);
      v |= static_cast<std::uint64_t>(byte) << (8 * i);
    }
    return v;
  }
  std::uint16_t u16(std::size_t at) const { return static_cast<std::uint16_t>(raw(at, 2)); }
  std::uint32_t u32(std::size_t at) const { return static_cast<std::uint32_t>(raw(at, 4)); }

  std::vector<std::uint32_t> read_values(std::size_t entry, std::uint16_t type, std::uint32_t count) const {
    const int size = type == kShort ? 2 : type == kLong ? 4 : type == 1 ? 1 : 0;
    if (size == 0) fail("unexpected field type in a required tag");
    const std::size_t at = static_cast<std::size_t>(size) * count <= 4 ? entry + 8 : u32(entry + 8);
    std::vector<std::uint32_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i) out[i] = static_cast<std::uint32_t>(raw(at + i * size, size));
    return out;
  }

  double sample(std::size_t at, std::uint32_t bits, std::uint32_t format) const {
    const std::uint64_t v = raw(at, static_cast<int>(bits / 8));
    if (format == 3) {
      if (bits == 32) return std::bit_cast<float>(static_cast<std::uint32_t>(v));
      return std::bit_cast<double>(v);
    }
    if (format == 2) {
      if (bits == 8) return static_cast<std::int8_t>(v);
      if (bits == 16) return static_cast<std::int16_t>(v);
      return static_cast<std::int32_t>(v);
    }
    return static_cast<double>(v);
  }

  std::string data_;
  fs::path path_;
  bool little_ = true;
};

}  // namespace

void write_tiff(const fs::path& path, const RealField& image) {
  const auto width = static_cast<std::uint32_t>(image.cols());
  const auto height = static_cast<std::uint32_t>(image.rows());
  if (width == 0 || height == 0) throw std::invalid_argument("write_tiff: empty image");
  constexpr std::uint16_t kEntries = 11;
  constexpr std::uint32_t kIfd = 8;
  constexpr std::uint32_t kData = 160;  // after the 138-byte IFD, 16-byte aligned
  const std::uint32_t data_bytes = width * height * 4;

  std::string out;
  out.reserve(kData + data_bytes);
  out += "II";
  put16(out, 42);
  put32(out, kIfd);
  put16(out, kEntries);
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t value) {
    put16(out, tag);
    put16(out, type);
    put32(out, 1);
    if (type == kShort) {
      put16(out, static_cast<std::uint16_t>(value));
      put16(out, 0);
    } else {
      put32(out, value);
    }
  };
  entry(256, kLong, width);
  entry(257, kLong, height);
  entry(258, kShort, 32);
  entry(259, kShort, 1);  // no compression
  entry(262, kShort, 1);  // black is zero
  entry(273, kLong, kData);
  entry(277, kShort, 1);
  entry(278, kLong, height);
  entry(279, kLong, data_bytes);
  entry(284, kShort, 1);
  entry(339, kShort, 3);  // IEEE float
  put32(out, 0);          // no further IFDs
  out.resize(kData, '\0');
  for (std::uint32_t r = 0; r < height; ++r) {
    for (std::uint32_t c = 0; c < width; ++c) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(image(r, c))));
  }
  write_text_atomic(path, out);
}

RealField read_tiff(const fs::path& path) { return TiffReader(read_text(path), path).read_first_image(); }

// --- files ------------------------------------------------------------------

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = path.string() + suffix.str();
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// --- stacks -----------------------------------------------------------------

void write_stack(const fs::path& dir, const DiversityStack& stack, const std::optional<NoiseParams>& noise) {
  stack.validate();
  fs::create_directories(dir);
  YAML::Node meta;
  meta["format"] = "phasediv-stack-1";
  YAML::Node files;
  for (int k = 0; k < stack.count(); ++k) {
    std::ostringstream name;
    name << "image_" << std::setw(2) << std::setfill('0') << k << ".tif";
    write_tiff(dir / name.str(), stack.images[k]);
    files.push_back(name.str());
  }
  meta["images"] = files;
  YAML::Node z;
  for (double v : stack.diversity_z) z.push_back(v);
  z.SetStyle(YAML::EmitterStyle::Flow);
  meta["diversity_z"] = z;
  meta["optics"] = yaml::encode(stack.config);
  if (noise) meta["noise"] = yaml::encode(*noise);
  meta["seed"] = stack.seed;
  if (stack.truth) {
    meta["truth"]["target_wrms"] = stack.truth->target_wrms;
    meta["truth"]["coeffs"] = yaml::encode(stack.truth->coeffs);
  }
  YAML::Emitter emit;
  emit.SetDoublePrecision(17);
  emit << meta;
  write_text_atomic(dir / kStackMetadata, std::string(emit.c_str()) + "\n");
}

DiversityStack read_stack(const fs::path& dir) {
  const fs::path meta_path = dir / kStackMetadata;
  if (!fs::exists(meta_path)) throw ConfigError("stack directory has no " + std::string(kStackMetadata) + ": " + dir.string());
  YAML::Node meta;
  try {
    meta = YAML::LoadFile(meta_path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError(meta_path.string() + ": " + e.what());
  }
  yaml::check_keys(meta, {"format", "images", "diversity_z", "optics", "noise", "seed", "truth"}, "stack");
  if (!meta["images"] || !meta["diversity_z"]) throw ConfigError("stack metadata needs images and diversity_z");

  DiversityStack stack;
  std::vector<std::string> files;
  try {
    files = meta["images"].as<std::vector<std::string>>();
    stack.diversity_z = meta["diversity_z"].as<std::vector<double>>();
  } catch (const YAML::Exception&) {
    throw ConfigError("stack metadata: images must be file names and diversity_z numbers");
  }
  if (files.size() != stack.diversity_z.size()) throw ConfigError("stack metadata: one diversity_z per image required");
  for (const auto& f : files) stack.images.push_back(read_tiff(dir / f));
  if (stack.images.empty()) throw ConfigError("stack metadata: no images");

  OpticalConfig optics;
  optics.grid_size = static_cast<int>(stack.images.front().rows());
  stack.config = yaml::decode_optics(meta["optics"], optics);
  yaml::read(meta, "seed", stack.seed, "stack");
  if (meta["truth"]) {
    yaml::check_keys(meta["truth"], {"target_wrms", "coeffs"}, "stack.truth");
    AberrationSample truth;
    yaml::read(meta["truth"], "target_wrms", truth.target_wrms, "stack.truth");
    truth.coeffs = yaml::decode_coeffs(meta["truth"]["coeffs"], "stack.truth.coeffs");
    stack.truth = truth;
  }
  stack.config.validate();
  stack.validate();
  return stack;
}

// --- results ----------------------------------------------------------------

std::string estimation_report_yaml(const EstimationResult& result, const DiversityStack& stack) {
  const double to_waves = 1.0 / (2.0 * std::numbers::pi);
  YAML::Emitter emit;
  emit.SetDoublePrecision(12);
  emit << YAML::BeginMap;
  emit << YAML::Key << "estimator" << YAML::Value << result.estimator;
  emit << YAML::Key << "converged" << YAML::Value << result.converged;
  emit << YAML::Key << "reason" << YAML::Value << result.reason;
  emit << YAML::Key << "iterations" << YAML::Value << result.iterations;
  emit << YAML::Key << "wall_time_s" << YAML::Value << result.wall_time;
  emit << YAML::Key << "wavelength_um" << YAML::Value << stack.config.wavelength;
  emit << YAML::Key << "coefficients" << YAML::Value << YAML::BeginSeq;
  for (const auto& [j, v] : result.coeffs) {
    emit << YAML::Flow << YAML::BeginMap << YAML::Key << "j" << YAML::Value << j << YAML::Key << "radians"
         << YAML::Value << v << YAML::Key << "waves" << YAML::Value << v * to_waves << YAML::EndMap;
  }
  emit << YAML::EndSeq;
  if (stack.truth) {
    const FrequencyGrid grid(stack.config);
    const auto idx = result.coeffs.indices();
    const ZernikeNorms norms = relative_zernike_norms(idx, grid);
    const ZernikeVector truth = stack.truth->coeffs.restricted_to(idx);
    emit << YAML::Key << "initial_wrms_waves" << YAML::Value << wrms(truth, norms);
    emit << YAML::Key << "rwe_waves" << YAML::Value << rwe(result.coeffs, truth, norms);
  }
  emit << YAML::EndMap;
  return std::string(emit.c_str()) + "\n";
}

std::string trace_csv(const EstimationResult& result) {
  std::ostringstream out;
  out << std::setprecision(12);
  const auto idx = result.coeffs.indices();
  out << "iteration,objective,gradient_norm";
  for (int j : idx) out << ",c" << j;
  out << "\n";
  for (const auto& t : result.trace) {
    out << t.iteration << "," << t.objective << "," << t.gradient_norm;
    for (int j : idx) out << "," << t.coeffs.get(j);
    out << "\n";
  }
  return out.str();
}

void write_estimation_result(const fs::path& dir, const EstimationResult& result, const DiversityStack& stack) {
  fs::create_directories(dir);
  write_text_atomic(dir / (result.estimator + "_result.yaml"), estimation_report_yaml(result, stack));
  write_text_atomic(dir / (result.estimator + "_trace.csv"), trace_csv(result));
  if (result.object_estimate.size() > 0) write_tiff(dir / (result.estimator + "_object.tif"), result.object_estimate);
}

ZernikeVector read_coefficients(const fs::path& result_yaml) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(result_yaml.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError(result_yaml.string() + ": " + e.what());
  }
  if (!node["coefficients"] || !node["coefficients"].IsSequence()) {
    throw ConfigError(result_yaml.string() + ": no coefficients list");
  }
  ZernikeVector c;
  for (const auto& entry : node["coefficients"]) {
    try {
      c.set(entry["j"].as<int>(), entry["radians"].as<double>());
    } catch (const YAML::Exception&) {
      throw ConfigError(result_yaml.string() + ": malformed coefficient entry");
    }
  }
  return c;
}

std::string correction_reports_csv(const std::vector<CorrectionReport>& reports) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "photons_per_pixel,ssim_deconvolved,ssim_reacquired,ssim_uncorrected,rwe_used,rwe_reacquisition,dose_factor\n";
  for (const auto& r : reports) {
    out << r.photons_per_pixel << "," << r.ssim_deconvolved << "," << r.ssim_reacquired << "," << r.ssim_uncorrected
        << "," << r.rwe_used << "," << r.rwe_reacquisition << "," << r.dose_factor << "\n";
  }
  return out.str();
}

}  // namespace phasediv
