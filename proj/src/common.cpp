#include "stnn/common.hpp"

#include <cmath>

namespace stnn {

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

CVector ComplexMatrix::column(std::size_t c) const {
    CVector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void ComplexMatrix::set_column(std::size_t c, std::span<const cplx> values) {
    if (values.size() != rows_) throw ShapeError("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

CVector ComplexMatrix::multiply(std::span<const cplx> x) const {
    if (x.size() != cols_) throw ShapeError("matrix-vector product: dimension mismatch");
    CVector y(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        cplx acc = 0.0;
        const cplx* row = &data_[r * cols_];
        for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

ComplexMatrix ComplexMatrix::multiply(const ComplexMatrix& other) const {
    if (other.rows_ != cols_) throw ShapeError("matrix product: dimension mismatch");
    ComplexMatrix out(rows_, other.cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = 0; k < cols_; ++k) {
            const cplx a = (*this)(r, k);
            if (a == cplx{}) continue;
            for (std::size_t c = 0; c < other.cols_; ++c) out(r, c) += a * other(k, c);
        }
    }
    return out;
}

ComplexMatrix ComplexMatrix::adjoint() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
    return out;
}

double ComplexMatrix::frobenius_norm() const {
    double acc = 0.0;
    for (const auto& v : data_) acc += std::norm(v);
    return std::sqrt(acc);
}

double relative_frobenius_error(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_frobenius_error: shape mismatch");
    double num = 0.0;
    double den = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        num += std::norm(da[i] - db[i]);
        den += std::norm(db[i]);
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double relative_error(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int log2_exact(std::size_t n) {
    if (!is_power_of_two(n)) throw ConfigError("size " + std::to_string(n) + " is not a power of two");
    int r = 0;
    while ((std::size_t{1} << r) < n) ++r;
    return r;
}

cplx unit_power(double phase, double exponent) {
    constexpr long double two_pi = 6.283185307179586476925286766559005768L;
    long double angle = static_cast<long double>(phase) * static_cast<long double>(exponent);
    angle = std::fmod(angle, two_pi);
    const double a = static_cast<double>(angle);
    return {std::cos(a), std::sin(a)};
}

RVector real_split(std::span<const cplx> x) {
    const std::size_t k = x.size();
    RVector out(2 * k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = x[i].real();
        out[k + i] = x[i].imag();
    }
    return out;
}

CVector real_join(std::span<const double> x) {
    if (x.size() % 2 != 0) throw ShapeError("real_join: odd length " + std::to_string(x.size()));
    const std::size_t k = x.size() / 2;
    CVector out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = {x[i], x[k + i]};
    return out;
}

}  // namespace stnn
