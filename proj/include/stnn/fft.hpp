// fft.hpp - unnormalised radix-2 FFT and the dense DFT oracle.

#pragma once

#include "stnn/common.hpp"

namespace stnn {

// Unnormalised DFT, forward kernel e^{-2 pi j kl / n}; inverse uses the
// conjugate kernel and is NOT divided by n. Length must be a power of two.
// When `counter` is non-null every real add/mul is tallied.
CVector fft(std::span<const cplx> x, bool inverse, OpCounter* counter = nullptr);
void fft_inplace(std::span<cplx> x, bool inverse, OpCounter* counter = nullptr);

// Dense DFT matrix by direct exponentiation, optionally scaled by 1/sqrt(n).
ComplexMatrix dense_dft_matrix(std::size_t n, bool inverse, bool normalized);

}  // namespace stnn
