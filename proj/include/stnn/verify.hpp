// verify.hpp - oracle checks shared by the `verify` subcommand and the tests.

#pragma once

#include "stnn/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stnn {

struct CheckResult {
    std::string name;
    double worst = 0.0;
    double tolerance = 0.0;
    std::string worst_case;  // description of the offending configuration
    std::size_t cases = 0;
    double raw_worst = 0.0;  // gradients only: error before the resolution allowance

    bool passed() const { return worst <= tolerance; }
};

inline constexpr double kFactorizationTol = 1e-10;
inline constexpr double kRecursiveDftTol = 1e-12;
inline constexpr double kExactInitTol = 1e-9;
inline constexpr double kGradCheckTol = 1e-5;
inline constexpr double kFastApplyTol = 1e-10;

// Dense composition of the factor chain against alpha^{kl}, N = 2..n_max,
// `trials` random unit-modulus alpha per N.
CheckResult check_factorization(std::size_t n_max, std::size_t trials, std::uint64_t seed);

// fast_dvm_apply against the dense product, `trials` random inputs per N.
CheckResult check_fast_apply(std::size_t n_max, std::size_t trials, std::uint64_t seed);

// Exact-twiddle chains against the dense DFT for every size <= size_max and
// every depth. `corrupt` perturbs one twiddle (negative control).
CheckResult check_recursive_dft(std::size_t size_max, bool corrupt = false);

// DVM-initialised linear network against real_split(A~ x) for the given sizes.
CheckResult check_exact_init(const std::vector<std::size_t>& sizes, std::size_t inputs, std::uint64_t seed);

// Finite-difference gradient check over `nets` random N = 4 networks,
// alternating structured and fully connected.
CheckResult check_gradients(std::size_t nets, std::uint64_t seed);

}  // namespace stnn
