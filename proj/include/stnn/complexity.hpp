// complexity.hpp - closed-form operation counts, structural counters over
// built networks, and the weight/FLOP reduction report.

#pragma once

#include "stnn/network.hpp"

#include <map>

namespace stnn {

struct FlopCount {
    std::uint64_t adds = 0;
    std::uint64_t muls = 0;
    // Set when an exact rational value had to be rounded (half up).
    bool adds_rounded = false;
    bool muls_rounded = false;

    std::uint64_t total() const { return adds + muls; }
};

// Full-depth formula in M, L, p and r (r = log2 of the DVM size N).
FlopCount flops_full(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p, std::uint64_t r);

// Depth-lambda formula.
FlopCount flops_truncated(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p, std::uint64_t lambda);

// Dense K x J real matrix times vector: K*J muls, K*(J-1) adds.
FlopCount count_dense_matvec(std::uint64_t rows, std::uint64_t cols);

enum class CountConvention {
    // Complex diagonal of length K = 2K muls, twiddle product = 3 muls,
    // complex add = 2 adds, leaf products as full complex multiplies, chain
    // normalisation folded into the adjacent diagonal.
    proof,
    // Every complex product = 4 muls + 2 adds, chain scale counted.
    full_complex,
};

std::string to_string(CountConvention c);

// Walks the factor structure of a built network.
FlopCount flops_counted(const Network& net, CountConvention convention = CountConvention::proof);

// Description of the counting choices, for reports.
std::map<std::string, std::string> counting_conventions(CountConvention convention);

// Dense baseline counts from its own closed form (independent of the walker).
FlopCount ffnn_flops_formula(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p);

// Trainable parameter count of the dense baseline: 2(2pM M) + 2pM + 2pM + M per block.
std::uint64_t ffnn_param_formula(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p);

// (ffnn - stnn) / ffnn * 100
double percentage_reduction(double ffnn, double stnn);

struct ComplexityRow {
    std::size_t n = 0;
    std::string model;  // "stnn" or "ffnn"
    std::uint64_t params = 0;
    std::uint64_t flops_formula_add = 0;
    std::uint64_t flops_formula_mul = 0;
    std::uint64_t flops_counted_add = 0;
    std::uint64_t flops_counted_mul = 0;
    double pr_weights_pct = 0.0;
    double pr_flops_pct = 0.0;

    bool operator==(const ComplexityRow&) const = default;
};

struct BenchConfig {
    std::size_t n = 8;
    std::size_t p = 1;
    int lambda = 4;
    int l_layers = 5;
};

struct ComplexityReport {
    std::vector<ComplexityRow> rows;
    std::vector<BenchConfig> configs;
    std::map<std::string, std::string> conventions;
    std::vector<std::string> notes;  // rounding flags and formula-vs-count residuals
};

// One stnn and one ffnn row per configuration. Pr columns compare the stnn row
// with the ffnn row of the same N (counted FLOPs); ffnn rows carry 0.
ComplexityReport reduction_report(const std::vector<BenchConfig>& configs, CountConvention convention = CountConvention::proof);

inline constexpr const char* kComplexityCsvHeader =
    "n,model,params,flops_formula_add,flops_formula_mul,flops_counted_add,flops_counted_mul,pr_weights_pct,pr_flops_pct";

std::string report_to_csv(const ComplexityReport& report);
std::string report_to_json(const ComplexityReport& report, int indent = 2);
// Parses rows written by report_to_csv (throws IoError on malformed input).
std::vector<ComplexityRow> parse_complexity_csv(const std::string& text);

// Recursion depth used when none is given: 8 -> 4, 16 -> 5, 32 -> 6, else max(1, log2(4N) - 2).
int default_lambda(std::size_t n);

}  // namespace stnn
