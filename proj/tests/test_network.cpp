#include "doctest.h"
#include "test_util.hpp"

#include "stnn/network.hpp"
#include "stnn/network_io.hpp"
#include "stnn/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

using namespace stnn;
using namespace testutil;

namespace {

NetworkConfig structured(std::size_t n, int lambda, std::size_t p = 1, std::uint64_t seed = 1) {
    NetworkConfig c;
    c.n = n;
    c.lambda = lambda;
    c.p = p;
    c.seed = seed;
    return c;
}

NetworkConfig dense(std::size_t n, std::size_t p = 1) {
    NetworkConfig c;
    c.n = n;
    c.p = p;
    c.kind = ModelKind::fully_connected;
    return c;
}

RVector stored_values(const Network& net) {
    RVector out;
    Network copy = net;
    for_each_stored(copy, copy.params(), [&](const std::string&, std::span<double> v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

void randomise_affine(Network& net, Rng& rng) {
    for (auto& b : net.params().blocks) {
        for (auto& v : b.bias1) v = 0.3 * rng.normal();
        for (auto& v : b.skip) v = rng.normal();
        for (auto& v : b.bias_out) v = rng.normal();
    }
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("leaky relu") {
    CHECK(leaky_relu(3.0, 0.2) == 3.0);
    CHECK(leaky_relu(-1.0, 0.2) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(leaky_relu(0.0, 0.2) == 0.0);
    CHECK(leaky_relu(0.0, 7.0) == 0.0);
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(Network(structured(8, 4)));
    CHECK_THROWS_AS(Network(structured(8, 5)), ConfigError);  // leaf size would drop below 1
    CHECK_THROWS_AS(Network(structured(8, 0)), ConfigError);
    CHECK_THROWS_AS(Network(structured(6, 1)), ConfigError);
    CHECK_THROWS_AS(Network(structured(8, 2, 0)), ConfigError);
    auto c = structured(8, 2);
    c.l_layers = 7;
    CHECK_THROWS_AS(Network{c}, ConfigError);
    c.l_layers = 9;
    CHECK(Network{c}.params().blocks.size() == 2);
    CHECK_THROWS_AS(model_kind_from_string("cnn"), ConfigError);
}

TEST_CASE("fully connected parameter counts") {
    CHECK(count_parameters(Network(dense(8))).total == 1104);
    CHECK(count_parameters(Network(dense(16))).total == 4256);
    CHECK(count_parameters(Network(dense(32))).total == 16704);
    // 16*32 + 32 + 32 + 32*16 + 16 for N = 8
    CHECK(16 * 32 + 32 + 32 + 32 * 16 + 16 == 1104);
    for (std::size_t n : {2u, 4u, 8u, 16u, 32u, 64u})
        for (std::size_t p : {1u, 2u, 3u}) {
            const std::size_t m = 2 * n;
            CHECK(count_parameters(Network(dense(n, p))).total == 2 * (2 * p * m * m) + 2 * p * m + 2 * p * m + m);
        }
}

TEST_CASE("structured parameter counts") {
    const std::size_t want[3] = {220, 428, 716};
    const std::size_t ffnn[3] = {1104, 4256, 16704};
    const std::size_t n[3] = {8, 16, 32};
    const int lambda[3] = {4, 5, 6};
    const double pr[3] = {83.0, 90.0, 96.0};
    for (int i = 0; i < 3; ++i) {
        const auto count = count_parameters(Network(structured(n[i], lambda[i]))).total;
        CAPTURE(n[i]);
        CHECK(std::abs(static_cast<double>(count) - static_cast<double>(want[i])) <= 0.15 * static_cast<double>(want[i]));
        const double reduction = 100.0 * static_cast<double>(ffnn[i] - count) / static_cast<double>(ffnn[i]);
        CHECK(std::abs(reduction - pr[i]) <= 3.0);
    }
    CHECK(100.0 * (4256.0 - static_cast<double>(count_parameters(Network(structured(16, 5))).total)) / 4256.0 >= 85.0);

    // a complex diagonal of length 16 holds 32 reals
    Network net(structured(16, 5));
    std::size_t d_hat = 0;
    for_each_trainable(net, net.params(), [&](const std::string& name, std::span<double> v) {
        if (name == "block0.w1.sub0.d_hat_in") d_hat = v.size();
    });
    CHECK(d_hat == 32);

    const auto pc = count_parameters(net);
    std::size_t sum = 0;
    for (const auto& [name, c] : pc.layers) {
        sum += c;
        if (name == "W2 (delay)") CHECK(c == 0);
    }
    CHECK(sum == pc.total);
    CHECK(flatten_trainable(net, net.params()).size() == pc.total);
}

TEST_CASE("shape contract and zero input") {
    Rng rng(41);
    for (int t = 0; t < 20; ++t) {
        NetworkConfig c = t % 2 ? dense(std::size_t{2} << rng.below(3), 1 + rng.below(2))
                                : structured(std::size_t{2} << rng.below(3), 1, 1 + rng.below(2), rng.next());
        c.seed = rng.next();
        c.delay_phase = rng.uniform(-kPi, kPi);
        const Network net = build_network(c);
        const RVector x = random_rvector(rng, 2 * c.n);
        const ForwardResult r = forward(net, x);
        CHECK(r.y.size() == 2 * c.n);
        CHECK(r.trace.blocks[0].y1.size() == 4 * c.p * c.n);
        CHECK(r.trace.blocks[0].y3.size() == 4 * c.p * c.n);
        CHECK(r.y == predict(net, x));
        for (double v : predict(net, RVector(2 * c.n, 0.0))) CHECK(v == 0.0);
        CHECK_THROWS_AS(forward(net, RVector(2 * c.n + 1)), ShapeError);
    }
}

TEST_CASE("delay layer is an isometry") {
    Rng rng(43);
    for (int t = 0; t < 20; ++t) {
        auto c = structured(8, 1 + static_cast<int>(rng.below(4)), 1 + rng.below(2), rng.next());
        c.delay_phase = rng.uniform(-kPi, kPi);
        const Network net = build_network(c);
        const ForwardResult r = forward(net, random_rvector(rng, 16));
        const auto& b = r.trace.blocks[0];
        CHECK(std::abs(norm(b.delay_out) - norm(b.delay_in)) <= 1e-12 * std::max(1.0, norm(b.delay_in)));
    }
}

TEST_CASE("exact DVM initialisation reproduces the scaled DVM") {
    Rng rng(47);
    for (std::size_t n : {4u, 8u, 16u}) {
        for (std::size_t p : {1u, 2u}) {
            auto c = structured(n, log2_exact(2 * n), p);
            c.activation_slope = 1.0;
            const DvmSpec spec = DvmSpec::from_phase(n, rng.uniform(-kPi, kPi));
            Network net = init_from_dvm(Network(c), spec);
            net.set_delay_exponents(std::vector<int>(c.hidden() / 2, 0));
            const ComplexMatrix a = build_scaled_dvm_dense(spec);
            double worst = 0.0;
            for (int t = 0; t < 100; ++t) {
                const CVector x = random_cvector(rng, n);
                worst = std::max(worst, max_abs_diff(predict(net, real_split(x)), real_split(a.multiply(x))));
            }
            CAPTURE(n);
            CAPTURE(p);
            CHECK(worst <= 1e-9);
        }
    }
}

TEST_CASE("init_from_dvm is deterministic and keeps the frozen set") {
    const DvmSpec spec = DvmSpec::from_phase(8, 0.7);
    const Network a = init_from_dvm(build_network(structured(8, 3)), spec);
    const Network b = init_from_dvm(build_network(structured(8, 3)), spec);
    CHECK(stored_values(a) == stored_values(b));
    CHECK(count_parameters(a).total == count_parameters(Network(structured(8, 3))).total);
    CHECK_THROWS_AS(init_from_dvm(Network(dense(8)), spec), ConfigError);
    CHECK_THROWS_AS(init_from_dvm(Network(structured(8, 3)), DvmSpec::from_phase(4, 0.7)), ShapeError);
}

TEST_CASE("bias offset start keeps every unit on the linear side") {
    Rng rng(59);
    for (int t = 0; t < 12; ++t) {
        NetworkConfig c = t % 2 == 0 ? structured(4, 2, 1 + rng.below(2), rng.next()) : dense(4, 1 + rng.below(2));
        c.l_layers = t % 3 == 0 ? 9 : 5;
        c.delay_phase = rng.uniform(-kPi, kPi);
        Network net = build_network(c);
        std::vector<RVector> xs;
        for (int i = 0; i < 40; ++i) xs.push_back(random_rvector(rng, 8));
        init_bias_offset(net, xs, 1.5);
        CAPTURE(t);
        for (const auto& x : xs) {
            const ForwardResult r = forward(net, x);
            for (const auto& b : r.trace.blocks)
                for (double v : b.pre1) CHECK(v > 0.0);
        }
        double scale = 1.0;
        for (const auto& x : xs)
            for (double v : predict(net, x)) scale = std::max(scale, std::abs(v));
        CHECK(max_abs_diff(predict(net, RVector(8, 0.0)), RVector(8, 0.0)) <= 1e-12 * scale);
        // midpoints of shifted inputs stay shifted, so the map is affine there
        for (int i = 0; i + 1 < 40; i += 2) {
            RVector mid(8);
            for (std::size_t k = 0; k < 8; ++k) mid[k] = 0.5 * (xs[i][k] + xs[i + 1][k]);
            const RVector a = predict(net, xs[i]), b = predict(net, xs[i + 1]), m = predict(net, mid);
            RVector avg(8);
            for (std::size_t k = 0; k < 8; ++k) avg[k] = 0.5 * (a[k] + b[k]);
            CHECK(max_abs_diff(m, avg) <= 1e-12 * scale);
        }
    }
    Network net = build_network(structured(4, 2));
    CHECK_THROWS_AS(init_bias_offset(net, {}, 1.5), ConfigError);
    CHECK_THROWS_AS(init_bias_offset(net, {RVector(8, 1.0)}, 1.0), ConfigError);
    CHECK_THROWS_AS(init_bias_offset(net, {RVector(6, 1.0)}, 1.5), ShapeError);
}

TEST_CASE("structured layers equal their densified matrices") {
    Rng rng(53);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = std::size_t{2} << rng.below(4);
        auto c = structured(n, 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(log2_exact(2 * n)))), 1 + rng.below(2),
                            rng.next());
        c.delay_phase = rng.uniform(-kPi, kPi);
        c.independent_twiddles = rng.below(2) == 1;
        c.diagonal_mode = rng.below(3) == 0 ? DiagonalMode::real_split : DiagonalMode::complex;
        Network net = build_network(c);
        randomise_affine(net, rng);
        const Network flat = densify(net);
        CHECK(flat.config().kind == ModelKind::fully_connected);
        const RVector x = random_rvector(rng, 2 * n);
        const RVector ys = predict(net, x);
        const RVector yd = predict(flat, x);
        double scale = 1.0;
        for (double v : ys) scale = std::max(scale, std::abs(v));
        CAPTURE(n);
        CHECK(max_abs_diff(ys, yd) <= 1e-12 * scale);
    }
}

TEST_CASE("trainable flatten round trip") {
    Rng rng(59);
    Network net = build_network(structured(8, 2, 2, 3));
    RVector theta = flatten_trainable(net, net.params());
    for (auto& v : theta) v = rng.normal();
    unflatten_trainable(net, net.params(), theta);
    CHECK(flatten_trainable(net, net.params()) == theta);
    theta.push_back(0.0);
    CHECK_THROWS_AS(unflatten_trainable(net, net.params(), theta), ShapeError);
}

TEST_CASE("optimiser steps only touch trainable positions") {
    Rng rng(61);
    for (const bool pin : {true, false}) {
        auto c = structured(8, 2, 1, 9);
        c.pin_gauge = pin;
        c.delay_phase = 0.4;
        Network net = build_network(c);
        const FrozenStructure frozen_before = net.frozen();

        std::set<const double*> trainable;
        for_each_trainable(net, net.params(), [&](const std::string&, std::span<double> v) {
            for (auto& x : v) trainable.insert(&x);
        });
        std::vector<std::pair<double*, double>> before;
        for_each_stored(net, net.params(), [&](const std::string&, std::span<double> v) {
            for (auto& x : v) before.emplace_back(&x, x);
        });

        std::vector<Sample> data(16);
        for (auto& s : data) {
            s.input = random_rvector(rng, 16);
            s.target = random_rvector(rng, 16);
        }
        OptimizerConfig opt;
        opt.learning_rate = 1e-2;
        AdamState adam(trainable.size());
        for (int step = 0; step < 10; ++step) {
            const LossAndGrad lg = loss_and_gradient(net, whole(data), 1);
            RVector theta = flatten_trainable(net, net.params());
            adam.step(theta, flatten_trainable(net, lg.grad), opt);
            unflatten_trainable(net, net.params(), theta);
        }
        std::size_t changed = 0, frozen_changed = 0;
        for (const auto& [ptr, old] : before) {
            if (*ptr != old) {
                ++changed;
                if (!trainable.count(ptr)) ++frozen_changed;
            }
        }
        CHECK(changed > 0);
        CHECK(frozen_changed == 0);
        CHECK(net.frozen().delay_exponents == frozen_before.delay_exponents);
        CHECK(net.frozen().delay_diag == frozen_before.delay_diag);
        CHECK(net.frozen().chain.output_perm == frozen_before.chain.output_perm);
    }
}

TEST_CASE("model file round trip") {
    Rng rng(67);
    for (int t = 0; t < 6; ++t) {
        NetworkConfig c = t % 3 == 2 ? dense(4, 1 + rng.below(2)) : structured(4, 1 + static_cast<int>(rng.below(3)), 1 + rng.below(2));
        c.seed = rng.next();
        c.delay_phase = rng.uniform(-kPi, kPi);
        c.independent_twiddles = t % 3 == 1;
        c.activation_slope = 0.2 + 0.1 * t;
        Network net = build_network(c);
        randomise_affine(net, rng);
        const std::string path = temp_path("stnn_model_roundtrip.bin");
        save_network(net, path);
        const Network back = load_network(path);
        CHECK(stored_values(back) == stored_values(net));
        CHECK(back.frozen().delay_exponents == net.frozen().delay_exponents);
        CHECK(network_config_json(back.config()) == network_config_json(net.config()));
        const RVector x = random_rvector(rng, 8);
        CHECK(predict(back, x) == predict(net, x));
        std::filesystem::remove(path);
    }
}

TEST_CASE("model file errors") {
    const std::string path = temp_path("stnn_model_bad.bin");
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOPE1234", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_network(path), IoError);
    CHECK_THROWS_AS(load_network(temp_path("does_not_exist_stnn.bin")), IoError);

    const Network net = build_network(structured(4, 2));
    save_network(net, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_network(path), IoError);
    std::filesystem::remove(path);
}
