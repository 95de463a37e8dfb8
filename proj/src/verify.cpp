#include "stnn/verify.hpp"

#include "stnn/dvm.hpp"
#include "stnn/fft.hpp"
#include "stnn/network.hpp"
#include "stnn/random.hpp"
#include "stnn/recursive_dft.hpp"
#include "stnn/trainer.hpp"

#include <cstdio>

namespace stnn {

namespace {

void record(CheckResult& r, double err, const std::string& what) {
    if (r.cases++ == 0 || err > r.worst || !(err == err)) {
        r.worst = err;
        r.worst_case = what;
    }
}

std::string phase_tag(std::size_t n, double phase) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "N=%zu phase=%.6f", n, phase);
    return buf;
}

CVector random_cvector(Rng& rng, std::size_t n) {
    CVector x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    return x;
}

}  // namespace

CheckResult check_factorization(std::size_t n_max, std::size_t trials, std::uint64_t seed) {
    CheckResult r{"factorization", 0.0, kFactorizationTol, {}, 0};
    Rng rng(seed);
    for (std::size_t n = 2; n <= n_max; n *= 2) {
        for (std::size_t t = 0; t < trials; ++t) {
            const DvmSpec spec = DvmSpec::from_phase(n, rng.uniform(-kPi, kPi));
            const double err = relative_frobenius_error(build_bluestein_chain(spec).to_dense(), build_scaled_dvm_dense(spec));
            record(r, err, phase_tag(n, spec.phase));
        }
    }
    return r;
}

CheckResult check_fast_apply(std::size_t n_max, std::size_t trials, std::uint64_t seed) {
    CheckResult r{"fast-apply", 0.0, kFastApplyTol, {}, 0};
    Rng rng(seed);
    for (std::size_t n = 2; n <= n_max; n *= 2) {
        const DvmSpec spec = DvmSpec::from_phase(n, rng.uniform(-kPi, kPi));
        const FactorChain chain = build_bluestein_chain(spec);
        const ComplexMatrix dense = build_scaled_dvm_dense(spec);
        for (std::size_t t = 0; t < trials; ++t) {
            const CVector x = random_cvector(rng, n);
            record(r, relative_error(fast_dvm_apply(chain, x), dense.multiply(x)), phase_tag(n, spec.phase));
        }
    }
    return r;
}

CheckResult check_recursive_dft(std::size_t size_max, bool corrupt) {
    CheckResult r{"recursive-dft", 0.0, kRecursiveDftTol, {}, 0};
    for (std::size_t size = 2; size <= size_max; size *= 2) {
        const ComplexMatrix dft = dense_dft_matrix(size, false, false);
        for (int depth = 1; depth <= log2_exact(size); ++depth) {
            RecursiveDftChain chain = build_recursive_dft_chain(size, depth, true);
            if (corrupt && chain.params().twiddles[0].size() > 1) chain.params().twiddles[0][1] *= std::polar(1.0, 1e-3);
            const double err = relative_frobenius_error(chain.to_dense(), dft);
            record(r, err, "size=" + std::to_string(size) + " depth=" + std::to_string(depth));
        }
    }
    return r;
}

CheckResult check_exact_init(const std::vector<std::size_t>& sizes, std::size_t inputs, std::uint64_t seed) {
    CheckResult r{"exact-init", 0.0, kExactInitTol, {}, 0};
    Rng rng(seed);
    for (std::size_t n : sizes) {
        NetworkConfig cfg;
        cfg.n = n;
        cfg.lambda = log2_exact(2 * n);
        cfg.activation_slope = 1.0;
        const DvmSpec spec = DvmSpec::from_phase(n, rng.uniform(-kPi, kPi));
        Network net = init_from_dvm(Network(cfg), spec);
        net.set_delay_exponents(std::vector<int>(cfg.hidden() / 2, 0));
        const ComplexMatrix dense = build_scaled_dvm_dense(spec);
        for (std::size_t t = 0; t < inputs; ++t) {
            const CVector x = random_cvector(rng, n);
            const RVector y = predict(net, real_split(x));
            const RVector ref = real_split(dense.multiply(x));
            double err = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) err = std::max(err, std::abs(y[k] - ref[k]));
            record(r, err, phase_tag(n, spec.phase));
        }
    }
    return r;
}

CheckResult check_gradients(std::size_t nets, std::uint64_t seed) {
    CheckResult r{"gradients", 0.0, kGradCheckTol, {}, 0};
    Rng rng(seed);
    for (std::size_t i = 0; i < nets; ++i) {
        NetworkConfig cfg;
        cfg.n = 4;
        cfg.kind = i % 2 == 0 ? ModelKind::structured : ModelKind::fully_connected;
        cfg.lambda = 1 + static_cast<int>(rng.below(3));
        cfg.p = 1 + rng.below(2);
        cfg.seed = rng.next();
        cfg.delay_phase = rng.uniform(-kPi, kPi);
        Network net = build_network(cfg);
        for (auto& b : net.params().blocks) {
            for (auto& v : b.bias1) v = 0.1 * rng.normal();
            for (auto& v : b.skip) v = rng.normal();
            for (auto& v : b.bias_out) v = rng.normal();
        }
        auto draw = [&] {
            Sample s;
            s.input.resize(2 * cfg.n);
            s.target.resize(2 * cfg.n);
            for (auto& v : s.input) v = rng.normal();
            for (auto& v : s.target) v = rng.normal();
            return s;
        };
        std::vector<Sample> batch(4);
        for (auto& s : batch) s = draw();
        resample_away_from_kinks(net, batch, draw);
        const GradCheckResult g = grad_check(net, whole(batch));
        r.raw_worst = std::max(r.raw_worst, g.raw_max_rel_error);
        record(r, g.max_rel_error, "net " + std::to_string(i) + " (" + to_string(cfg.kind) + ", p=" + std::to_string(cfg.p) +
                                       ", lambda=" + std::to_string(cfg.lambda) + ") " + g.worst_param);
    }
    return r;
}

}  // namespace stnn
