#pragma once

#include "cfcf/grid.hpp"

namespace cfcf::spectral {

/// Relative bound on the imaginary residue accepted by idft2.
inline constexpr double kImagResidueTolerance = 1e-8;

/// Unnormalized forward 2-D DFT.
SpectralGrid dft2(const RealGrid& g);
SpectralGrid dft2(const SpectralGrid& g);

/// Inverse 2-D DFT with 1/(H*W) normalization. Throws SymmetryViolation if the
/// result carries an imaginary residue above
/// kImagResidueTolerance * (1 + max|real|).
RealGrid idft2(const SpectralGrid& s);

/// Inverse transform keeping the complex result.
SpectralGrid idft2_complex(const SpectralGrid& s);

/// Largest |imag| of the inverse transform relative to (1 + max|real|).
double imag_residue(const SpectralGrid& s);

/// (a (*) b)[n] = sum_i a[i] b[(n + i) mod P], evaluated as F^-1{conj(A) . B}.
RealGrid circ_correlate(const RealGrid& a, const RealGrid& b);

/// out[u, v] = in[(-u) mod H, (-v) mod W]; the first element stays in place.
SpectralGrid time_reverse(const SpectralGrid& s);

bool is_conjugate_symmetric(const SpectralGrid& s, double tol = 1e-10);

SpectralStack dft2(const FeatureStack& stack);

SpectralGrid conj(const SpectralGrid& s);

}  // namespace cfcf::spectral
