#pragma once

#include "phasediv/field.hpp"

namespace phasediv::fft {

// Thin wrapper over FFTW. Plans are cached per shape and shared between
// threads; only plan creation is serialized.
//
// forward() is unnormalized. inverse() carries the 1/(rows*cols) factor so
// inverse(forward(x)) == x.

void forward_inplace(ComplexField& field);
void inverse_inplace(ComplexField& field);

ComplexField forward(const ComplexField& field);
ComplexField forward(const RealField& field);
ComplexField inverse(const ComplexField& field);

/// Real part of inverse(); for spectra of real fields.
RealField inverse_real(const ComplexField& spectrum);

/// Half spectrum (rows x (cols/2 + 1)) of a real field, unnormalized.
ComplexField forward_half(const RealField& field);

/// Inverse of forward_half, including the 1/(rows*cols) factor.
RealField inverse_half(const ComplexField& half, int cols);

/// Cyclic convolution of two equally sized real fields.
RealField convolve(const RealField& a, const RealField& b);

}  // namespace phasediv::fft
