// network.hpp - the structured (StNN) and fully connected beamforming networks.
//
// Both kinds share the four-layer block
//
//   y1 = leaky(W1 x + b1)                 2N  -> 4pN   trainable
//   y2 = split(diag(alpha^k) join(y1))    4pN -> 4pN   frozen delay, k = 0..2pN-1
//   y3 = y2 + diag(s) y1                  4pN -> 4pN   trainable skip diagonal
//   out = W4 y3 + b_out                   4pN -> 2N    trainable, linear
//
// where split/join convert between a complex vector of length K and its real
// form [Re; Im] of length 2K. In the structured kind W1 stacks p complex
// submatrices Dbreve_i F_i J Dhat_i (N -> M = 2N complex) and W4 concatenates
// p submatrices Dhat_i J^T F*_i; F_i and F*_i are recursive DFT chains of
// size M and depth lambda. The fully connected kind uses dense real W1, W4.
// Networks with L > 5 layers repeat the block (L - 1) / 4 times.

#pragma once

#include "stnn/common.hpp"
#include "stnn/dvm.hpp"
#include "stnn/recursive_dft.hpp"

#include <functional>
#include <string>

namespace stnn {

enum class ModelKind { structured, fully_connected };

// complex: one complex multiplier per entry (exact DVM initialisation possible).
// real_split: separate real multipliers for the real and imaginary coordinate.
enum class DiagonalMode { complex, real_split };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(DiagonalMode mode);
DiagonalMode diagonal_mode_from_string(const std::string& s);

struct NetworkConfig {
    std::size_t n = 8;  // antennas, power of two
    std::size_t p = 1;  // submatrices per structured layer
    int lambda = 1;     // recursion depth of the trainable DFT chains
    int l_layers = 5;
    double activation_slope = 0.2;
    ModelKind kind = ModelKind::structured;
    double delay_phase = 0.0;  // delay-layer node value alpha = e^{j delay_phase}
    std::uint64_t seed = 0;
    DiagonalMode diagonal_mode = DiagonalMode::complex;
    bool independent_twiddles = false;
    // Freeze the leading entry of every twiddle diagonal and of the leaf block.
    // Each of those scales one fixed set of chain outputs, which the adjacent
    // trainable diagonal absorbs, so the function class is unchanged.
    bool pin_gauge = true;

    std::size_t m() const { return 2 * n; }
    std::size_t hidden() const { return 4 * p * n; }
    std::size_t blocks() const { return static_cast<std::size_t>((l_layers - 1) / 4); }
    cplx delay_alpha() const { return {std::cos(delay_phase), std::sin(delay_phase)}; }
    bool gauge_pinned() const { return pin_gauge && diagonal_mode == DiagonalMode::complex; }

    void validate() const;
};

struct StructuredSub {
    CVector d_hat_in;   // N
    ChainParams f;      // size M
    CVector d_breve;    // M
    ChainParams f_star; // size M
    CVector d_hat_out;  // N
};

struct BlockParams {
    std::vector<StructuredSub> subs;  // structured kind
    RVector w1;                       // fully connected: hidden x 2N, row-major
    RVector w4;                       // fully connected: 2N x hidden, row-major
    RVector bias1;                    // hidden
    RVector skip;                     // hidden
    RVector bias_out;                 // 2N
};

struct ParameterPack {
    std::vector<BlockParams> blocks;
};

// Same shape as the trainable subset of a ParameterPack.
using GradientPack = ParameterPack;

struct FrozenStructure {
    ChainLayout chain;              // shared geometry of every F_i and F*_i
    std::vector<int> delay_exponents;  // 2pN
    CVector delay_diag;             // alpha^k
};

class Network {
public:
    explicit Network(NetworkConfig config);

    const NetworkConfig& config() const { return config_; }
    ParameterPack& params() { return params_; }
    const ParameterPack& params() const { return params_; }
    const FrozenStructure& frozen() const { return frozen_; }

    std::size_t input_dim() const { return 2 * config_.n; }
    std::size_t output_dim() const { return 2 * config_.n; }

    // Zero-valued pack with this network's shapes (gradient accumulator).
    ParameterPack zero_pack() const;

    void set_delay_exponents(std::vector<int> exponents);
    void set_activation_slope(double slope) { config_.activation_slope = slope; }

private:
    NetworkConfig config_;
    ParameterPack params_;
    FrozenStructure frozen_;
};

struct SubTrace {
    ChainTrace f;
    CVector f_out;  // input of Dbreve
    ChainTrace f_star;
    CVector truncated;  // input of Dhat_out
};

struct BlockTrace {
    RVector input;
    CVector input_complex;
    std::vector<SubTrace> subs;
    RVector pre1;
    RVector y1;
    CVector delay_in;
    CVector delay_out;
    RVector y2;
    RVector y3;
    RVector output;
};

struct ForwardTrace {
    std::vector<BlockTrace> blocks;
};

struct ForwardResult {
    RVector y;
    ForwardTrace trace;
};

double leaky_relu(double x, double slope);

// Randomly initialised network (seeded by config.seed).
Network build_network(const NetworkConfig& config);

// Exact DVM factor values in every submatrix; Dhat_out carries 1/p so the
// stacked network still equals A~ when p > 1. Biases and skip are zeroed.
Network init_from_dvm(Network net, const DvmSpec& spec);

// Sets every F and F* chain to the exact normalised DFT (or its conjugate) and
// leaves all diagonals, biases and the skip layer as they are. The chains do
// not depend on alpha, so this keeps the frequency-specific factors random.
void init_dft_chains(Network& net);

// Data-dependent bias start: block by block, every hidden bias becomes
// factor * max |pre-activation| over `inputs`, so no input sits near the
// activation kink, and bias_out absorbs the resulting constant.
void init_bias_offset(Network& net, const std::vector<RVector>& inputs, double factor = 1.5);

ForwardResult forward(const Network& net, std::span<const double> x);
RVector predict(const Network& net, std::span<const double> x);

// Smallest |pre-activation| over all blocks of a trace.
double min_kink_distance(const ForwardTrace& trace);

// Visits trainable scalars in declaration order. `pack` must have the shapes
// of `net` (its own params or a gradient accumulator).
void for_each_trainable(const Network& net, ParameterPack& pack,
                        const std::function<void(const std::string&, std::span<double>)>& fn);
// Visits every stored scalar including pinned entries (serialisation order).
void for_each_stored(const Network& net, ParameterPack& pack,
                     const std::function<void(const std::string&, std::span<double>)>& fn);

RVector flatten_trainable(const Network& net, const ParameterPack& pack);
void unflatten_trainable(const Network& net, ParameterPack& pack, std::span<const double> values);

struct ParameterCount {
    std::vector<std::pair<std::string, std::size_t>> layers;
    std::size_t total = 0;
};

ParameterCount count_parameters(const Network& net);

// Real matrices of the linear parts of W1 and W4 for one block, composed from
// per-factor dense matrices (verification use only).
struct DenseBlock {
    std::vector<RVector> w1_rows;  // hidden x 2N
    std::vector<RVector> w4_rows;  // 2N x hidden
};
DenseBlock densify_block(const Network& net, std::size_t block);

// Fully connected network whose W1/W4 are the densified structured layers.
Network densify(const Network& net);

}  // namespace stnn
