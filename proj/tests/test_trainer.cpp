#include "doctest.h"
#include "test_util.hpp"

#include "stnn/trainer.hpp"

#include "json.hpp"

#include <algorithm>

using namespace stnn;
using namespace testutil;

namespace {

NetworkConfig small_config(ModelKind kind, std::uint64_t seed, int lambda = 2, std::size_t p = 1) {
    NetworkConfig c;
    c.n = 4;
    c.kind = kind;
    c.lambda = lambda;
    c.p = p;
    c.seed = seed;
    c.delay_phase = 0.9;
    return c;
}

std::vector<Sample> random_samples(Rng& rng, std::size_t count, std::size_t n) {
    std::vector<Sample> out(count);
    for (auto& s : out) {
        s.input = random_rvector(rng, 2 * n);
        s.target = random_rvector(rng, 2 * n);
    }
    return out;
}

Network with_random_affine(Network net, Rng& rng) {
    for (auto& b : net.params().blocks) {
        for (auto& v : b.bias1) v = 0.1 * rng.normal();
        for (auto& v : b.skip) v = rng.normal();
        for (auto& v : b.bias_out) v = rng.normal();
    }
    return net;
}

// Noiseless N = 4 beamforming data, 4 angles x 16 samples.
Dataset small_dataset() {
    return make_dataset(ArrayGeometry::make(4), 24e9, {30.0, 40.0, 50.0, 60.0}, 16, 0.0, 1);
}

Dataset empty_like(const Dataset& ds) {
    Dataset e = ds;
    e.samples.clear();
    return e;
}

}  // namespace

TEST_CASE("mse loss by hand") {
    // n = 1: one complex output, two real components
    CHECK(mse_loss({{1.0, 0.0}}, {{0.0, 0.0}}, 1) == 1.0);
    CHECK(mse_loss({{1.0, 2.0}, {0.0, 0.0}}, {{0.0, 0.0}, {0.0, 1.0}}, 1) == doctest::Approx((1.0 + 4.0 + 1.0) / 2.0));
    CHECK(mse_loss({{3.0, 4.0, 0.0, 0.0}}, {{3.0, 4.0, 0.0, 0.0}}, 2) == 0.0);
}

TEST_CASE("loss is invariant to sample order within a batch") {
    Rng rng(71);
    const Network net = with_random_affine(build_network(small_config(ModelKind::structured, 3)), rng);
    const auto samples = random_samples(rng, 24, 4);
    for (int t = 0; t < 10; ++t) {
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order.begin(), order.end());
        CHECK(batch_mse(net, BatchView{&samples, order}) == doctest::Approx(batch_mse(net, whole(samples))).epsilon(1e-13));
    }
}

TEST_CASE("gradient check on random small networks") {
    Rng rng(73);
    for (int t = 0; t < 20; ++t) {
        const ModelKind kind = t % 2 ? ModelKind::fully_connected : ModelKind::structured;
        auto c = small_config(kind, rng.next(), 1 + static_cast<int>(rng.below(3)), 1 + rng.below(2));
        c.delay_phase = rng.uniform(-kPi, kPi);
        c.independent_twiddles = t % 4 == 2;
        c.diagonal_mode = t % 8 == 4 ? DiagonalMode::real_split : DiagonalMode::complex;
        const Network net = with_random_affine(build_network(c), rng);
        auto samples = random_samples(rng, 4, 4);
        REQUIRE(resample_away_from_kinks(net, samples, [&] { return random_samples(rng, 1, 4)[0]; }));
        const GradCheckResult g = grad_check(net, whole(samples));
        CAPTURE(t);
        CAPTURE(g.worst_param);
        CAPTURE(g.analytic);
        CAPTURE(g.numeric);
        CHECK(g.checked == count_parameters(net).total);
        CHECK(g.max_rel_error <= 1e-5);
    }
}

TEST_CASE("gradient check on the exact linear network") {
    Rng rng(79);
    auto c = small_config(ModelKind::structured, 1, 3);
    c.activation_slope = 1.0;
    const Network net = init_from_dvm(Network(c), DvmSpec::from_phase(4, 0.9));
    const auto samples = random_samples(rng, 4, 4);
    CHECK(grad_check(net, whole(samples)).max_rel_error <= 1e-7);
}

TEST_CASE("gradient check detects a corrupted entry") {
    Rng rng(83);
    const Network net = with_random_affine(build_network(small_config(ModelKind::structured, 5)), rng);
    auto samples = random_samples(rng, 4, 4);
    resample_away_from_kinks(net, samples, [&] { return random_samples(rng, 1, 4)[0]; });
    const LossAndGrad lg = loss_and_gradient(net, whole(samples));
    const RVector g = flatten_trainable(net, lg.grad);
    // corrupt the largest entry so the floor does not mask the 1% change
    const auto idx = static_cast<std::size_t>(std::max_element(g.begin(), g.end(), [](double a, double b) {
                                                  return std::abs(a) < std::abs(b);
                                              }) - g.begin());
    GradCheckOptions opt;
    opt.corrupt_index = idx;
    const GradCheckResult r = grad_check(net, whole(samples), opt);
    CHECK(r.max_rel_error >= 5e-3);
    CHECK(r.worst_index == idx);
    CHECK(r.worst_param == trainable_names(net)[idx]);
}

TEST_CASE("zero residual gives zero gradient") {
    Rng rng(89);
    for (const ModelKind kind : {ModelKind::structured, ModelKind::fully_connected}) {
        const Network net = with_random_affine(build_network(small_config(kind, 7)), rng);
        auto samples = random_samples(rng, 6, 4);
        for (auto& s : samples) s.target = predict(net, s.input);
        const LossAndGrad lg = loss_and_gradient(net, whole(samples));
        CHECK(lg.loss == 0.0);
        for (double v : flatten_trainable(net, lg.grad)) CHECK(std::abs(v) <= 1e-14);
    }
}

TEST_CASE("gradient pack has no frozen entries") {
    const Network net = build_network(small_config(ModelKind::structured, 1, 2));
    Rng rng(97);
    const auto samples = random_samples(rng, 2, 4);
    const LossAndGrad lg = loss_and_gradient(net, whole(samples));
    CHECK(flatten_trainable(net, lg.grad).size() == count_parameters(net).total);
    CHECK(trainable_names(net).size() == count_parameters(net).total);
}

TEST_CASE("threaded gradients match the serial reduction") {
    Rng rng(101);
    for (const ModelKind kind : {ModelKind::structured, ModelKind::fully_connected}) {
        const Network net = with_random_affine(build_network(small_config(kind, 11, 2, 2)), rng);
        const auto samples = random_samples(rng, 37, 4);
        const LossAndGrad a = loss_and_gradient(net, whole(samples), 1);
        for (std::size_t threads : {2u, 3u, 8u}) {
            const LossAndGrad b = loss_and_gradient(net, whole(samples), threads);
            CHECK(a.loss == b.loss);
            CHECK(flatten_trainable(net, a.grad) == flatten_trainable(net, b.grad));
        }
    }
}

TEST_CASE("sgd and adam steps") {
    // f(theta) = theta^2, gradient 2 theta
    RVector theta{1.0};
    sgd_step(theta, RVector{2.0 * theta[0]}, 0.1);
    CHECK(theta[0] == doctest::Approx(0.8).epsilon(1e-15));

    OptimizerConfig cfg;
    AdamState adam(3);
    RVector p{1.0, -2.0, 3.0};
    const RVector before = p;
    adam.step(p, RVector(3, 0.0), cfg);
    CHECK(p == before);

    // first adam step moves each coordinate by lr against the gradient sign
    AdamState adam2(2);
    RVector q{0.0, 0.0};
    adam2.step(q, RVector{4.0, -0.5}, cfg);
    CHECK(q[0] == doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(cfg.learning_rate).epsilon(1e-6));
    CHECK_THROWS_AS(adam2.step(q, RVector{1.0}, cfg), ShapeError);

    OptimizerConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.learning_rate = 1e-3;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("lm solves a linear least-squares problem") {
    Rng rng(103);
    for (int trial = 0; trial < 5; ++trial) {
        const int rows = 12, cols = 4;
        Eigen::MatrixXd a(rows, cols);
        Eigen::VectorXd b(rows);
        for (int i = 0; i < rows; ++i) {
            b(i) = rng.normal();
            for (int j = 0; j < cols; ++j) a(i, j) = rng.normal();
        }
        const Eigen::VectorXd oracle = a.householderQr().solve(b);

        LeastSquaresProblem prob;
        prob.num_params = cols;
        prob.residuals = [&](std::span<const double> th) {
            const Eigen::Map<const Eigen::VectorXd> t(th.data(), cols);
            const Eigen::VectorXd r = a * t - b;
            return RVector(r.data(), r.data() + rows);
        };
        prob.jacobian = [&](std::span<const double>) { return a; };

        OptimizerConfig cfg;
        LmState state{cfg.lm_damping};
        RVector theta(cols, 0.0);
        int accepted = 0;
        for (int step = 0; step < 3; ++step)
            if (lm_step(prob, theta, state, cfg).accepted) ++accepted;
        CHECK(accepted >= 1);
        CHECK(accepted <= 3);
        const RVector r = prob.residuals(theta);
        double cost = 0.0;
        for (double v : r) cost += v * v;
        const double best = (a * oracle - b).squaredNorm();
        CHECK(cost - best <= 1e-12 * best);
        double err = 0.0;
        for (int j = 0; j < cols; ++j) err = std::max(err, std::abs(theta[static_cast<std::size_t>(j)] - oracle(j)));
        CHECK(err <= 1e-7);
    }
}

TEST_CASE("network least-squares residuals match the batch loss") {
    Rng rng(107);
    const Network net = with_random_affine(build_network(small_config(ModelKind::structured, 13)), rng);
    const auto samples = random_samples(rng, 5, 4);
    const LeastSquaresProblem prob = network_least_squares(net, whole(samples));
    const RVector theta = flatten_trainable(net, net.params());
    const RVector r = prob.residuals(theta);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    CHECK(ss == doctest::Approx(batch_mse(net, whole(samples))).epsilon(1e-12));

    // Jacobian against central differences
    const Eigen::MatrixXd jac = prob.jacobian(theta);
    REQUIRE(jac.cols() == static_cast<Eigen::Index>(theta.size()));
    double worst = 0.0;
    for (std::size_t j = 0; j < theta.size(); j += 7) {
        RVector tp = theta, tm = theta;
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        tp[j] += h;
        tm[j] -= h;
        const RVector rp = prob.residuals(tp), rm = prob.residuals(tm);
        for (std::size_t i = 0; i < r.size(); ++i)
            worst = std::max(worst, std::abs((rp[i] - rm[i]) / (2 * h) - jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("small structured network fits noiseless data") {
    const Dataset ds = small_dataset();
    auto c = small_config(ModelKind::structured, 1, 3);
    c.delay_phase = ds.dvm_phase();
    OptimizerConfig opt;
    opt.learning_rate = 3e-3;
    opt.batch_size = 16;
    opt.epochs = 3000;
    opt.seed = 1;
    opt.target_mse = 1e-6;
    const TrainResult r = train(build_network(c), ds, empty_like(ds), opt);
    CHECK(r.report.final_train_mse() <= 1e-6);
    CHECK(r.report.epochs_run <= 3000);
    CHECK(r.report.stop_reason == StopReason::target_mse);
    CHECK(r.report.val_mse.empty());
}

TEST_CASE("training loss decreases for every seed") {
    const Dataset ds = small_dataset();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = small_config(ModelKind::structured, seed, 3);
        c.delay_phase = ds.dvm_phase();
        OptimizerConfig opt;
        opt.epochs = 100;
        opt.seed = seed;
        const TrainResult r = train(build_network(c), ds, empty_like(ds), opt);
        CAPTURE(seed);
        CHECK(r.report.train_mse.size() == 101);
        CHECK(r.report.train_mse[100] < r.report.train_mse[0]);
    }
}

TEST_CASE("training is deterministic") {
    const Dataset ds = small_dataset();
    auto [tr, va] = split_dataset(ds, 0.75, 3);
    for (const OptimizerKind kind : {OptimizerKind::adam, OptimizerKind::sgd, OptimizerKind::lm}) {
        auto c = small_config(ModelKind::structured, 21, 2);
        c.delay_phase = ds.dvm_phase();
        OptimizerConfig opt;
        opt.kind = kind;
        opt.epochs = 5;
        opt.seed = 4;
        const TrainResult a = train(build_network(c), tr, va, opt);
        opt.threads = 3;
        const TrainResult b = train(build_network(c), tr, va, opt);
        CHECK(a.report.train_mse == b.report.train_mse);
        CHECK(a.report.val_mse == b.report.val_mse);
        opt.threads = 1;
        const TrainResult d = train(build_network(c), tr, va, opt);
        CHECK(report_to_json(a.report, false) == report_to_json(d.report, false));
    }
}

TEST_CASE("training report fields") {
    const Dataset ds = small_dataset();
    auto [tr, va] = split_dataset(ds, 0.75, 3);
    auto c = small_config(ModelKind::fully_connected, 2);
    OptimizerConfig opt;
    opt.epochs = 0;
    const TrainResult r = train(build_network(c), tr, va, opt);
    CHECK(r.report.epochs_run == 0);
    CHECK(r.report.train_mse.size() == 1);
    const auto j = nlohmann::json::parse(report_to_json(r.report));
    for (const char* key : {"config", "seed", "epochs_run", "train_mse", "val_mse", "final_train_mse", "final_val_mse", "param_count",
                            "wall_time_s", "stop_reason", "version"})
        CHECK(j.contains(key));
    CHECK(j["param_count"] == 2 * (2 * 8 * 8) + 2 * 8 + 2 * 8 + 8);
    CHECK_FALSE(nlohmann::json::parse(report_to_json(r.report, false)).contains("wall_time_s"));
}

TEST_CASE("early stopping") {
    const Dataset ds = small_dataset();
    auto [tr, va] = split_dataset(ds, 0.75, 3);
    auto c = small_config(ModelKind::structured, 5, 3);
    c.activation_slope = 1.0;
    Network exact = init_from_dvm(Network(c), ds.dvm());
    exact.set_delay_exponents(std::vector<int>(c.hidden() / 2, 0));
    OptimizerConfig opt;
    opt.epochs = 50;
    opt.target_mse = 1e-20;
    const TrainResult r = train(exact, tr, va, opt);
    CHECK(r.report.stop_reason == StopReason::target_mse);
    CHECK(r.report.epochs_run == 0);

    opt.target_mse = 0.0;
    opt.patience = 3;
    opt.learning_rate = 10.0;
    opt.kind = OptimizerKind::sgd;
    c.activation_slope = 0.2;
    bool stopped_or_diverged = false;
    try {
        const TrainResult p = train(build_network(c), tr, va, opt);
        stopped_or_diverged = p.report.stop_reason == StopReason::patience;
    } catch (const DivergenceError&) {
        stopped_or_diverged = true;
    }
    CHECK(stopped_or_diverged);
}

TEST_CASE("training errors") {
    const Dataset ds = small_dataset();
    auto c = small_config(ModelKind::structured, 1, 2);
    OptimizerConfig opt;
    opt.epochs = 1;

    CHECK_THROWS_AS(train(build_network(c), empty_like(ds), empty_like(ds), opt), ConfigError);

    Network nan_net = build_network(c);
    nan_net.params().blocks[0].bias_out[0] = std::nan("");
    CHECK_THROWS_AS(train(nan_net, ds, empty_like(ds), opt), DivergenceError);

    auto c8 = c;
    c8.n = 8;
    CHECK_THROWS_AS(train(build_network(c8), ds, empty_like(ds), opt), ShapeError);

    NetworkConfig big;
    big.n = 32;
    big.kind = ModelKind::fully_connected;
    const Dataset ds32 = make_dataset(ArrayGeometry::make(32), 24e9, {30.0}, 4, 0.0, 1);
    opt.kind = OptimizerKind::lm;
    CHECK_THROWS_AS(train(build_network(big), ds32, empty_like(ds32), opt), ConfigError);
}
