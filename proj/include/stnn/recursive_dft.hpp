// recursive_dft.hpp - radix-2 decimation-in-frequency factorisation of the DFT
// with trainable twiddles and leaf blocks.
//
// One level maps a block of length 2h to
//   top    = x[0:h] + x[h:2h]
//   bottom = D (x[0:h] - x[h:2h])
// and recurses on both halves; after `depth` levels every block of length
// size / 2^depth is multiplied by the shared dense leaf matrix. The outputs are
// then interleaved level by level (even-odd permutation), which is folded into
// one frozen index table. With D = diag(w_{2h}^k) and an exact DFT leaf the
// chain reproduces the size-`size` DFT.

#pragma once

#include "stnn/common.hpp"

#include <functional>

namespace stnn {

struct ChainOptions {
    bool inverse = false;               // conjugate kernel (used for F*)
    bool normalized = false;            // unit-norm leaf, global 1/sqrt(2^depth)
    bool independent_twiddles = false;  // one diagonal per sibling block instead of one per level
    bool pin_gauge = false;             // first twiddle of every diagonal and leaf(0,0) are frozen
};

// Frozen geometry of a chain; shared by every chain with the same shape.
struct ChainLayout {
    std::size_t size = 0;
    int depth = 0;
    std::size_t leaf_size = 0;
    bool independent_twiddles = false;
    bool pin_gauge = false;
    double scale = 1.0;
    std::vector<std::size_t> output_perm;  // out[i] = scale * leaf_out[output_perm[i]]

    static ChainLayout make(std::size_t size, int depth, const ChainOptions& options);

    std::size_t half(int level) const { return size >> (level + 1); }
    std::size_t blocks(int level) const { return std::size_t{1} << level; }
    std::size_t twiddle_count(int level) const { return independent_twiddles ? size / 2 : half(level); }
};

// Trainable values of one chain.
struct ChainParams {
    std::vector<CVector> twiddles;  // per level
    CVector leaf;                   // leaf_size x leaf_size, row-major

    static ChainParams zeros(const ChainLayout& layout);
    static ChainParams exact(const ChainLayout& layout, bool inverse, bool normalized);
};

// Values recorded by a forward pass for the backward pass.
struct ChainTrace {
    std::vector<CVector> level_inputs;
    CVector leaf_input;
};

CVector chain_apply(const ChainLayout& layout, const ChainParams& params, std::span<const cplx> x,
                    ChainTrace* trace = nullptr, OpCounter* counter = nullptr);

// Accumulates parameter gradients into `grad` and writes the input gradient.
// Gradients use the convention G(z) = dL/dRe(z) + j dL/dIm(z).
void chain_backward(const ChainLayout& layout, const ChainParams& params, const ChainTrace& trace,
                    std::span<const cplx> grad_out, std::span<cplx> grad_in, ChainParams& grad);

// Calls fn(name, real view) once per contiguous run of trainable scalars.
void for_each_trainable(const ChainLayout& layout, ChainParams& params, const std::string& prefix,
                        const std::function<void(const std::string&, std::span<double>)>& fn);

std::size_t trainable_scalar_count(const ChainLayout& layout);

// Adds the twiddle multiplications, butterfly additions and leaf products of
// one application to `counter` using `complex_mul_cost` real multiplies and
// `complex_mul_adds` real adds per twiddle product.
void count_chain_ops(const ChainLayout& layout, std::uint64_t complex_mul_cost, std::uint64_t complex_mul_adds,
                     OpCounter& counter);

// Layout and parameters bundled; the dvm-core view of a recursive chain.
class RecursiveDftChain {
public:
    RecursiveDftChain(ChainLayout layout, ChainParams params) : layout_(std::move(layout)), params_(std::move(params)) {}

    const ChainLayout& layout() const { return layout_; }
    ChainParams& params() { return params_; }
    const ChainParams& params() const { return params_; }

    std::size_t size() const { return layout_.size; }
    int depth() const { return layout_.depth; }
    double scale() const { return layout_.scale; }

    CVector apply(std::span<const cplx> x, OpCounter* counter = nullptr) const {
        return chain_apply(layout_, params_, x, nullptr, counter);
    }
    ComplexMatrix to_dense() const;

private:
    ChainLayout layout_;
    ChainParams params_;
};

// exact = true: DFT twiddles and DFT leaf blocks (unnormalised unless
// options.normalized). exact = false: zero-filled, for later initialisation.
// Throws ConfigError unless size is a power of two and 1 <= depth <= log2(size).
RecursiveDftChain build_recursive_dft_chain(std::size_t size, int depth, bool exact, const ChainOptions& options = {});

}  // namespace stnn
