#include "stnn/fft.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace stnn {

namespace {

// Forward twiddles e^{-2 pi j k / n}, k < n/2, evaluated directly rather than
// by recurrence so every entry is accurate to a few ulp.
const CVector& twiddle_table(std::size_t n) {
    thread_local std::map<std::size_t, CVector> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    CVector table(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        table[k] = {std::cos(a), std::sin(a)};
    }
    return cache.emplace(n, std::move(table)).first->second;
}

}  // namespace

void fft_inplace(std::span<cplx> x, bool inverse, OpCounter* counter) {
    const std::size_t n = x.size();
    if (!is_power_of_two(n)) throw ConfigError("fft: length " + std::to_string(n) + " is not a power of two");
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }

    const CVector& table = twiddle_table(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                cplx w = table[k * stride];
                if (inverse) w = std::conj(w);
                const cplx u = x[start + k];
                const cplx v = x[start + k + half] * w;
                x[start + k] = u + v;
                x[start + k + half] = u - v;
            }
        }
        if (counter) {
            counter->complex_mul(n / 2);
            counter->complex_add(n);
        }
    }
}

CVector fft(std::span<const cplx> x, bool inverse, OpCounter* counter) {
    CVector out(x.begin(), x.end());
    fft_inplace(out, inverse, counter);
    return out;
}

ComplexMatrix dense_dft_matrix(std::size_t n, bool inverse, bool normalized) {
    if (n == 0) throw ConfigError("dense_dft_matrix: empty size");
    ComplexMatrix m(n, n);
    const double sign = inverse ? 1.0 : -1.0;
    const double scale = normalized ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            // reduce k*l mod n first so the angle stays small
            const std::size_t e = (k * l) % n;
            const double a = sign * 2.0 * kPi * static_cast<double>(e) / static_cast<double>(n);
            m(k, l) = scale * cplx{std::cos(a), std::sin(a)};
        }
    }
    return m;
}

}  // namespace stnn
