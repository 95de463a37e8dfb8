// dvm.hpp - delay Vandermonde matrix (DVM): dense oracles, the chirp
// factorisation into seven sparse factors, and the fast O(N log N) product.
//
// The scaled DVM has entries alpha^{kl}, k,l = 0..N-1. Writing
//   alpha^{kl} = alpha^{k^2/2} * alpha^{-(k-l)^2/2} * alpha^{l^2/2}
// turns the product into two diagonal chirps around a circulant convolution
// of length M = 2N, which the FFT diagonalises:
//
//   A~ = Dhat * J^T * F* * diag(fft(c)) * F * J * Dhat
//
// with F the unitary DFT of size M, J = [I_N; 0] and c the circulant's first
// column. Fractional powers use alpha^x := e^{j*phase*x} with the stored phase.

#pragma once

#include "stnn/common.hpp"

#include <variant>

namespace stnn {

struct DvmSpec {
    std::size_t n = 0;
    double phase = 0.0;  // alpha = e^{j*phase}

    static DvmSpec from_phase(std::size_t n, double phase);
    // Takes the principal argument of alpha; |alpha| must be 1 within 1e-12.
    static DvmSpec from_alpha(std::size_t n, cplx alpha);

    cplx alpha() const { return {std::cos(phase), std::sin(phase)}; }
    std::size_t m() const { return 2 * n; }
    int r() const { return log2_exact(n); }

    // Throws ConfigError unless n = 2^r with r >= 1.
    void validate() const;
};

// alpha^{kl}, k,l = 0..N-1 (symmetric, unit modulus).
ComplexMatrix build_scaled_dvm_dense(const DvmSpec& spec);
// alpha^{(k+1) l}: rows start at node index 1.
ComplexMatrix build_unscaled_dvm_dense(const DvmSpec& spec);

// [1, a^{-1/2}, ..., a^{-(N-1)^2/2}, 1, a^{-(N-1)^2/2}, ..., a^{-1/2}], length 2N.
CVector circulant_first_column(const DvmSpec& spec);

// --- sparse factors ---------------------------------------------------------

struct ComplexDiagonal {
    CVector values;
};

// [I; 0]: copies `from` entries into a zero vector of length `to`.
struct ZeroPad {
    std::size_t from = 0;
    std::size_t to = 0;
};

// [I 0]: keeps the leading `to` of `from` entries.
struct ZeroPadTranspose {
    std::size_t from = 0;
    std::size_t to = 0;
};

struct Dft {
    std::size_t size = 0;
    bool inverse = false;
    bool normalized = false;
};

struct EvenOddPermutation {
    std::size_t size = 0;
};

// H = [[I, I], [D, -D]] acting on a vector of length 2 * twiddles.size().
struct Butterfly {
    CVector twiddles;
};

using Factor = std::variant<ComplexDiagonal, ZeroPad, ZeroPadTranspose, Dft, EvenOddPermutation, Butterfly>;

std::size_t factor_in_dim(const Factor& f);
std::size_t factor_out_dim(const Factor& f);
CVector apply_factor(const Factor& f, std::span<const cplx> x, OpCounter* counter = nullptr);

// Ordered factors; factors()[0] is applied to the input first.
class FactorChain {
public:
    FactorChain() = default;
    explicit FactorChain(std::vector<Factor> factors);

    const std::vector<Factor>& factors() const { return factors_; }
    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    CVector apply(std::span<const cplx> x, OpCounter* counter = nullptr) const;
    // Composes the chain column by column; test and verification use only.
    ComplexMatrix to_dense() const;

private:
    std::vector<Factor> factors_;
    std::size_t in_dim_ = 0;
    std::size_t out_dim_ = 0;
};

// Dhat -> J -> F -> Dbreve -> F* -> J^T -> Dhat, with Dbreve = fft(c) unnormalised.
FactorChain build_bluestein_chain(const DvmSpec& spec);

// The middle five factors only: J^T F* Dbreve F J, equal to alpha^{-(k-l)^2/2}.
FactorChain build_circulant_block_chain(const DvmSpec& spec);

// A~ x through the factor chain in O(N log N).
CVector fast_dvm_apply(const FactorChain& chain, std::span<const cplx> x, OpCounter* counter = nullptr);

// [x_0, x_K, x_1, x_{K+1}, ...] for a vector of length 2K.
CVector even_odd_permute(std::span<const cplx> x);
CVector even_odd_unpermute(std::span<const cplx> x);

}  // namespace stnn
