#pragma once

#include <Eigen/Core>

#include <complex>

namespace phasediv {

/// Row-major float64 image or frequency-domain field. Row index is y, column index is x.
using RealField = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexField = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace phasediv
