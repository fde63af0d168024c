#pragma once

#include "phasediv/correct.hpp"
#include "phasediv/estimation.hpp"
#include "phasediv/field.hpp"
#include "phasediv/simulate.hpp"
#include "phasediv/stack.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace phasediv {

/// Single-strip uncompressed 32-bit float grayscale TIFF.
void write_tiff(const std::filesystem::path& path, const RealField& image);

/// First image of an uncompressed grayscale TIFF (8/16/32-bit integer or 32/64-bit float,
/// either byte order). Throws std::runtime_error on anything else.
RealField read_tiff(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Name of the metadata file inside a stack directory.
inline constexpr const char* kStackMetadata = "stack.yaml";

/// One TIFF per diversity image plus stack.yaml (diversity_z, optics, noise, truth, seed).
void write_stack(const std::filesystem::path& dir, const DiversityStack& stack,
                 const std::optional<NoiseParams>& noise = std::nullopt);

/// Reads a stack directory. optics.grid_size may be omitted; it is taken from the images.
DiversityStack read_stack(const std::filesystem::path& dir);

/// Coefficients in radians and waves, convergence summary, and rwe when the stack has a truth.
std::string estimation_report_yaml(const EstimationResult& result, const DiversityStack& stack);
std::string trace_csv(const EstimationResult& result);

/// <estimator>_result.yaml, <estimator>_trace.csv and <estimator>_object.tif in `dir`.
void write_estimation_result(const std::filesystem::path& dir, const EstimationResult& result,
                             const DiversityStack& stack);

/// Coefficients (radians) from a result file written by write_estimation_result.
ZernikeVector read_coefficients(const std::filesystem::path& result_yaml);

std::string correction_reports_csv(const std::vector<CorrectionReport>& reports);

}  // namespace phasediv
