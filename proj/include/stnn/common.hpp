// common.hpp - shared numeric types, error classes and small helpers.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stnn {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;
using RVector = std::vector<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr const char* kVersion = "0.3.0";

// Invalid sizes, depths, flags or other construction parameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Vector or matrix dimensions that do not compose.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be read or written, or has a bad header.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN or infinite loss during training.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Real additions and multiplications accumulated by an instrumented kernel.
struct OpCounter {
    std::uint64_t adds = 0;
    std::uint64_t muls = 0;

    void complex_mul(std::uint64_t count = 1) { muls += 4 * count; adds += 2 * count; }
    void complex_add(std::uint64_t count = 1) { adds += 2 * count; }
    std::uint64_t total() const { return adds + muls; }
};

// Dense row-major complex matrix. Only used for oracles, leaf blocks and
// verification; production transforms never materialise these above N = 64.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    static ComplexMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<cplx> data() { return data_; }
    std::span<const cplx> data() const { return data_; }

    CVector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const cplx> values);

    CVector multiply(std::span<const cplx> x) const;
    ComplexMatrix multiply(const ComplexMatrix& other) const;
    ComplexMatrix adjoint() const;

    double frobenius_norm() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    CVector data_;
};

// ||a - b||_F / ||b||_F
double relative_frobenius_error(const ComplexMatrix& a, const ComplexMatrix& b);

// ||a - b||_2 / max(||b||_2, tiny)
double relative_error(std::span<const cplx> a, std::span<const cplx> b);

bool is_power_of_two(std::size_t n);
int log2_exact(std::size_t n);

// e^{j * phase * exponent}. The product is reduced modulo 2*pi in extended
// precision so large exponents (k*l up to ~1e6) keep ~1e-13 phase accuracy.
cplx unit_power(double phase, double exponent);

// [Re(x_0..x_{K-1}), Im(x_0..x_{K-1})]
RVector real_split(std::span<const cplx> x);
// Inverse of real_split; throws ShapeError on odd length.
CVector real_join(std::span<const double> x);

}  // namespace stnn
