// Small oracles and generators shared by the unit tests.

#pragma once

#include "stnn/common.hpp"
#include "stnn/random.hpp"

#include <cmath>

namespace testutil {

using stnn::cplx;
using stnn::CVector;

inline CVector random_cvector(stnn::Rng& rng, std::size_t n) {
    CVector x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    return x;
}

inline stnn::RVector random_rvector(stnn::Rng& rng, std::size_t n, double scale = 1.0) {
    stnn::RVector x(n);
    for (auto& v : x) v = scale * rng.normal();
    return x;
}

// Direct O(n^2) DFT sum, computed with long double twiddles.
inline CVector naive_dft(const CVector& x, bool inverse) {
    const std::size_t n = x.size();
    CVector y(n);
    const long double sign = inverse ? 1.0L : -1.0L;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<long double> acc = 0.0L;
        for (std::size_t l = 0; l < n; ++l) {
            const long double ang = sign * 2.0L * 3.141592653589793238462643383279L * static_cast<long double>((k * l) % n) /
                                    static_cast<long double>(n);
            acc += std::complex<long double>(x[l].real(), x[l].imag()) * std::complex<long double>(std::cos(ang), std::sin(ang));
        }
        y[k] = {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
    }
    return y;
}

// e^{j phase e} evaluated in long double.
inline cplx expj(double phase, long double e) {
    const long double a = static_cast<long double>(phase) * e;
    return {static_cast<double>(std::cos(a)), static_cast<double>(std::sin(a))};
}

inline double max_abs_diff(const CVector& a, const CVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const stnn::RVector& a, const stnn::RVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double norm(const CVector& x) {
    double s = 0.0;
    for (auto v : x) s += std::norm(v);
    return std::sqrt(s);
}

}  // namespace testutil
