#include "stnn/dvm.hpp"

#include "stnn/fft.hpp"

#include <cmath>

namespace stnn {

DvmSpec DvmSpec::from_phase(std::size_t n, double phase) {
    DvmSpec spec{n, phase};
    spec.validate();
    return spec;
}

DvmSpec DvmSpec::from_alpha(std::size_t n, cplx alpha) {
    if (std::abs(std::abs(alpha) - 1.0) > 1e-12) throw ConfigError("DVM node value must have unit modulus");
    return from_phase(n, std::arg(alpha));
}

void DvmSpec::validate() const {
    if (n < 2 || !is_power_of_two(n)) throw ConfigError("DVM size must be 2^r with r >= 1, got " + std::to_string(n));
    if (!std::isfinite(phase)) throw ConfigError("DVM phase must be finite");
}

ComplexMatrix build_scaled_dvm_dense(const DvmSpec& spec) {
    spec.validate();
    ComplexMatrix a(spec.n, spec.n);
    for (std::size_t k = 0; k < spec.n; ++k)
        for (std::size_t l = 0; l < spec.n; ++l) a(k, l) = unit_power(spec.phase, static_cast<double>(k * l));
    return a;
}

ComplexMatrix build_unscaled_dvm_dense(const DvmSpec& spec) {
    spec.validate();
    ComplexMatrix a(spec.n, spec.n);
    for (std::size_t k = 0; k < spec.n; ++k)
        for (std::size_t l = 0; l < spec.n; ++l) a(k, l) = unit_power(spec.phase, static_cast<double>((k + 1) * l));
    return a;
}

CVector circulant_first_column(const DvmSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n;
    CVector c(2 * n);
    for (std::size_t m = 0; m < n; ++m) {
        const cplx v = unit_power(spec.phase, -0.5 * static_cast<double>(m * m));
        c[m] = v;
        if (m > 0) c[2 * n - m] = v;
    }
    c[n] = 1.0;
    return c;
}

// --- factors -----------------------------------------------------------------

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::size_t factor_in_dim(const Factor& f) {
    return std::visit(overloaded{
                          [](const ComplexDiagonal& d) { return d.values.size(); },
                          [](const ZeroPad& z) { return z.from; },
                          [](const ZeroPadTranspose& z) { return z.from; },
                          [](const Dft& d) { return d.size; },
                          [](const EvenOddPermutation& p) { return p.size; },
                          [](const Butterfly& b) { return 2 * b.twiddles.size(); },
                      },
                      f);
}

std::size_t factor_out_dim(const Factor& f) {
    return std::visit(overloaded{
                          [](const ComplexDiagonal& d) { return d.values.size(); },
                          [](const ZeroPad& z) { return z.to; },
                          [](const ZeroPadTranspose& z) { return z.to; },
                          [](const Dft& d) { return d.size; },
                          [](const EvenOddPermutation& p) { return p.size; },
                          [](const Butterfly& b) { return 2 * b.twiddles.size(); },
                      },
                      f);
}

CVector apply_factor(const Factor& f, std::span<const cplx> x, OpCounter* counter) {
    if (x.size() != factor_in_dim(f)) throw ShapeError("factor input dimension mismatch");
    return std::visit(
        overloaded{
            [&](const ComplexDiagonal& d) {
                CVector y(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) y[i] = d.values[i] * x[i];
                if (counter) counter->complex_mul(x.size());
                return y;
            },
            [&](const ZeroPad& z) {
                CVector y(z.to);
                std::copy(x.begin(), x.end(), y.begin());
                return y;
            },
            [&](const ZeroPadTranspose& z) { return CVector(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(z.to)); },
            [&](const Dft& d) {
                CVector y = fft(x, d.inverse, counter);
                if (d.normalized) {
                    const double s = 1.0 / std::sqrt(static_cast<double>(d.size));
                    for (auto& v : y) v *= s;
                    if (counter) counter->muls += 2 * d.size;
                }
                return y;
            },
            [&](const EvenOddPermutation&) { return even_odd_permute(x); },
            [&](const Butterfly& b) {
                const std::size_t h = b.twiddles.size();
                CVector y(2 * h);
                for (std::size_t k = 0; k < h; ++k) {
                    y[k] = x[k] + x[h + k];
                    y[h + k] = b.twiddles[k] * (x[k] - x[h + k]);
                }
                if (counter) {
                    counter->complex_add(2 * h);
                    counter->complex_mul(h);
                }
                return y;
            },
        },
        f);
}

FactorChain::FactorChain(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw ConfigError("factor chain must not be empty");
    for (std::size_t i = 1; i < factors_.size(); ++i) {
        if (factor_out_dim(factors_[i - 1]) != factor_in_dim(factors_[i]))
            throw ShapeError("factor chain: factor " + std::to_string(i) + " does not compose with its predecessor");
    }
    in_dim_ = factor_in_dim(factors_.front());
    out_dim_ = factor_out_dim(factors_.back());
}

CVector FactorChain::apply(std::span<const cplx> x, OpCounter* counter) const {
    if (x.size() != in_dim_) throw ShapeError("factor chain: input length " + std::to_string(x.size()) + ", expected " + std::to_string(in_dim_));
    CVector v(x.begin(), x.end());
    for (const auto& f : factors_) v = apply_factor(f, v, counter);
    return v;
}

ComplexMatrix FactorChain::to_dense() const {
    ComplexMatrix out(out_dim_, in_dim_);
    CVector e(in_dim_);
    for (std::size_t l = 0; l < in_dim_; ++l) {
        e[l] = 1.0;
        out.set_column(l, apply(e));
        e[l] = 0.0;
    }
    return out;
}

namespace {

CVector chirp_diagonal(const DvmSpec& spec) {
    CVector d(spec.n);
    for (std::size_t k = 0; k < spec.n; ++k) d[k] = unit_power(spec.phase, 0.5 * static_cast<double>(k * k));
    return d;
}

std::vector<Factor> circulant_factors(const DvmSpec& spec) {
    const std::size_t n = spec.n;
    const std::size_t m = spec.m();
    // Dbreve uses the unnormalised DFT: F* diag(fft(c)) F is then exactly the
    // circulant with first column c when F is unitary.
    CVector d_breve = fft(circulant_first_column(spec), false);
    return {ZeroPad{n, m}, Dft{m, false, true}, ComplexDiagonal{std::move(d_breve)}, Dft{m, true, true}, ZeroPadTranspose{m, n}};
}

}  // namespace

FactorChain build_bluestein_chain(const DvmSpec& spec) {
    spec.validate();
    CVector d_hat = chirp_diagonal(spec);
    std::vector<Factor> factors;
    factors.emplace_back(ComplexDiagonal{d_hat});
    for (auto& f : circulant_factors(spec)) factors.push_back(std::move(f));
    factors.emplace_back(ComplexDiagonal{std::move(d_hat)});
    return FactorChain(std::move(factors));
}

FactorChain build_circulant_block_chain(const DvmSpec& spec) {
    spec.validate();
    return FactorChain(circulant_factors(spec));
}

CVector fast_dvm_apply(const FactorChain& chain, std::span<const cplx> x, OpCounter* counter) {
    if (chain.in_dim() != chain.out_dim()) throw ShapeError("fast_dvm_apply: chain is not square");
    return chain.apply(x, counter);
}

CVector even_odd_permute(std::span<const cplx> x) {
    if (x.size() % 2 != 0) throw ShapeError("even_odd_permute: odd length " + std::to_string(x.size()));
    const std::size_t k = x.size() / 2;
    CVector y(x.size());
    for (std::size_t i = 0; i < k; ++i) {
        y[2 * i] = x[i];
        y[2 * i + 1] = x[k + i];
    }
    return y;
}

CVector even_odd_unpermute(std::span<const cplx> x) {
    if (x.size() % 2 != 0) throw ShapeError("even_odd_unpermute: odd length " + std::to_string(x.size()));
    const std::size_t k = x.size() / 2;
    CVector y(x.size());
    for (std::size_t i = 0; i < k; ++i) {
        y[i] = x[2 * i];
        y[k + i] = x[2 * i + 1];
    }
    return y;
}

}  // namespace stnn
