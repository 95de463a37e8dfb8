#include "doctest.h"
#include "test_util.hpp"

#include "stnn/complexity.hpp"

#include "json.hpp"

#include <cmath>

using namespace stnn;

namespace {

// Closed forms evaluated in long double, rounded half up.
std::uint64_t half_up(long double x) { return static_cast<std::uint64_t>(std::floor(x + 0.5L)); }

std::pair<std::uint64_t, std::uint64_t> full_oracle(long double m, long double l, long double p, long double r) {
    const long double adds = p * (l - 1) * m * r + 4 * p * (l - 1) * m - ((l - 1) / 4) * m;
    const long double muls = (p / 2) * (l - 1) * m * r + 23.0L / 4.0L * p * m * (l - 1);
    return {half_up(adds), half_up(muls)};
}

std::pair<std::uint64_t, std::uint64_t> truncated_oracle(long double m, long double l, long double p, long double lambda) {
    const long double sq = m * m / std::pow(2.0L, lambda - 1);
    const long double adds = p * (l - 1) * sq + p * lambda * (l - 1) * m + 0.75L * p * (l - 1) * m;
    const long double muls = (l - 1) * p * sq + 3 * m * p * (l - 1) + 0.75L * p * lambda * (l - 1) * m;
    return {half_up(adds), half_up(muls)};
}

NetworkConfig cfg(std::size_t n, int lambda, ModelKind kind = ModelKind::structured, std::size_t p = 1, int layers = 5) {
    NetworkConfig c;
    c.n = n;
    c.lambda = lambda;
    c.kind = kind;
    c.p = p;
    c.l_layers = layers;
    return c;
}

std::uint64_t below(Rng& rng, std::uint64_t k) { return rng.next() % k; }

double within(double value, double target) { return std::abs(value - target) / target; }

}  // namespace

TEST_CASE("full-depth formula") {
    const FlopCount f = flops_full(16, 5, 1, 3);
    CHECK(f.adds == 432);  // 1*4*16*3 + 4*4*16 - 16
    CHECK(f.muls == 464);  // 0.5*4*16*3 + 23/4*16*4
    CHECK_FALSE(f.adds_rounded);

    // p doubles: the first two add terms double
    const FlopCount f2 = flops_full(16, 5, 2, 3);
    CHECK(f2.adds - f.adds == 4 * 16 * 3 + 4 * 4 * 16);
    // L = 9: every term is linear in L - 1
    const FlopCount f9 = flops_full(16, 9, 1, 3);
    CHECK(f9.adds == 2 * f.adds);
    CHECK(f9.muls == 2 * f.muls);

    Rng rng(151);
    for (int t = 0; t < 200; ++t) {
        const std::uint64_t m = 2 + below(rng, 500), l = 5 + 4 * below(rng, 4), p = 1 + below(rng, 4), r = 1 + below(rng, 10);
        const FlopCount c = flops_full(m, l, p, r);
        const auto [a, mu] = full_oracle(static_cast<long double>(m), static_cast<long double>(l), static_cast<long double>(p),
                                         static_cast<long double>(r));
        CHECK(c.adds == a);
        CHECK(c.muls == mu);
    }
    CHECK_THROWS_AS(flops_full(16, 6, 1, 3), ConfigError);
}

TEST_CASE("truncated formula against the reference totals") {
    CHECK(within(static_cast<double>(flops_truncated(16, 5, 1, 4).total()), 992.0) <= 0.06);
    CHECK(within(static_cast<double>(flops_truncated(32, 5, 1, 5).total()), 2176.0) <= 0.05);
    CHECK(within(static_cast<double>(flops_truncated(64, 5, 1, 6).total()), 4736.0) <= 0.03);
    for (auto [m, lambda, table] : {std::tuple{16, 4, 992.0}, {32, 5, 2176.0}, {64, 6, 4736.0}})
        CHECK(within(static_cast<double>(flops_truncated(static_cast<std::uint64_t>(m), 5, 1, static_cast<std::uint64_t>(lambda)).total()),
                     table) <= 0.10);
}

TEST_CASE("truncated formula matches its closed form and rounds half up") {
    Rng rng(157);
    for (int t = 0; t < 300; ++t) {
        const std::uint64_t m = 1 + below(rng, 300), l = 5 + 4 * below(rng, 3), p = 1 + below(rng, 4), lambda = 1 + below(rng, 12);
        const FlopCount c = flops_truncated(m, l, p, lambda);
        const auto [a, mu] = truncated_oracle(static_cast<long double>(m), static_cast<long double>(l), static_cast<long double>(p),
                                              static_cast<long double>(lambda));
        CHECK(c.adds == a);
        CHECK(c.muls == mu);
    }
    // M = 1, lambda = 4: 0.5 + 16 + 3 = 19.5 adds, 0.5 + 12 + 12 = 24.5 muls
    const FlopCount h = flops_truncated(1, 5, 1, 4);
    CHECK(h.adds == 20);
    CHECK(h.muls == 25);
    CHECK(h.adds_rounded);
    CHECK(h.muls_rounded);
    CHECK_FALSE(flops_truncated(32, 5, 1, 5).adds_rounded);
}

TEST_CASE("formula monotonicity") {
    for (std::uint64_t m : {16u, 32u, 64u, 128u})
        for (std::uint64_t p : {1u, 2u})
            for (std::uint64_t l : {5u, 9u}) {
                const auto base = flops_truncated(m, l, p, 3).total();
                CHECK(flops_truncated(2 * m, l, p, 3).total() > base);
                CHECK(flops_truncated(m, l, p + 1, 3).total() > base);
                CHECK(flops_truncated(m, l + 4, p, 3).total() > base);
                const auto fb = flops_full(m, l, p, 4).total();
                CHECK(flops_full(2 * m, l, p, 4).total() > fb);
                CHECK(flops_full(m, l, p + 1, 4).total() > fb);
                CHECK(flops_full(m, l + 4, p, 4).total() > fb);
                int max_lambda = 0;
                while ((std::uint64_t{1} << (max_lambda + 1)) <= m) ++max_lambda;
                for (int lam = 1; lam < max_lambda; ++lam)
                    CHECK(flops_truncated(m, l, p, static_cast<std::uint64_t>(lam + 1)).total() <
                          flops_truncated(m, l, p, static_cast<std::uint64_t>(lam)).total());
            }
}

TEST_CASE("dense matvec count") {
    const FlopCount c = count_dense_matvec(2, 2);
    CHECK(c.muls == 4);
    CHECK(c.adds == 2);
}

TEST_CASE("counted FLOPs") {
    const double ffnn_table[3] = {2240.0, 8576.0, 33536.0};
    const std::size_t ns[3] = {8, 16, 32};
    for (int i = 0; i < 3; ++i) {
        const std::size_t n = ns[i];
        const FlopCount dense = flops_counted(Network(cfg(n, 1, ModelKind::fully_connected)));
        CHECK(within(static_cast<double>(dense.total()), ffnn_table[i]) <= 0.10);
        const FlopCount closed = ffnn_flops_formula(2 * n, 5, 1);
        CHECK(dense.adds == closed.adds);
        CHECK(dense.muls == closed.muls);
    }
    const FlopCount s8 = flops_counted(Network(cfg(8, 4)));
    CHECK(within(static_cast<double>(s8.total()), static_cast<double>(flops_truncated(16, 5, 1, 4).total())) <= 0.15);

    // p-way accumulation and block repetition are visible in the count
    CHECK(flops_counted(Network(cfg(8, 4, ModelKind::structured, 1, 9))).total() == 2 * s8.total());
    CHECK(flops_counted(Network(cfg(8, 4, ModelKind::structured, 2))).total() > s8.total());
    CHECK(flops_counted(Network(cfg(8, 4)), CountConvention::full_complex).total() > s8.total());
}

TEST_CASE("counted FLOP growth") {
    // structured at fixed lambda - r offset grows like M log M
    for (std::size_t n : {32u, 64u, 128u}) {
        const int lam = log2_exact(4 * n) - 2;
        const double a = static_cast<double>(flops_counted(Network(cfg(n, lam))).total());
        const double b = static_cast<double>(flops_counted(Network(cfg(2 * n, lam + 1))).total());
        CAPTURE(n);
        CHECK(b / a <= 2.4);
        CHECK(b / a > 2.0);
    }
    // dense grows like M^2
    for (std::size_t n : {8u, 16u, 32u}) {
        const double a = static_cast<double>(flops_counted(Network(cfg(n, 1, ModelKind::fully_connected))).total());
        const double b = static_cast<double>(flops_counted(Network(cfg(2 * n, 1, ModelKind::fully_connected))).total());
        CHECK(b / a >= 3.6);
        CHECK(b / a <= 4.4);
    }
}

TEST_CASE("reduction report") {
    const ComplexityReport rep = reduction_report({{8, 1, 4, 5}, {16, 1, 5, 5}, {32, 1, 6, 5}});
    REQUIRE(rep.rows.size() == 6);
    const double pr_w[3] = {83.0, 90.0, 96.0};
    const double pr_f[3] = {56.0, 75.0, 85.0};
    const std::uint64_t ffnn_params[3] = {1104, 4256, 16704};
    for (int i = 0; i < 3; ++i) {
        const auto& s = rep.rows[static_cast<std::size_t>(2 * i)];
        const auto& f = rep.rows[static_cast<std::size_t>(2 * i + 1)];
        CHECK(s.model == "stnn");
        CHECK(f.model == "ffnn");
        CHECK(f.params == ffnn_params[i]);
        CHECK(ffnn_param_formula(2 * s.n, 5, 1) == f.params);
        CHECK(std::abs(s.pr_weights_pct - pr_w[i]) <= 3.0);
        CHECK(std::abs(s.pr_flops_pct - pr_f[i]) <= 5.0);
        CHECK(f.pr_weights_pct == 0.0);
        for (const auto& row : {s, f}) {
            CHECK(row.pr_weights_pct >= 0.0);
            CHECK(row.pr_weights_pct <= 100.0);
            CHECK(row.pr_flops_pct >= 0.0);
            CHECK(row.pr_flops_pct <= 100.0);
            CHECK(row.flops_counted_add > 0);
            CHECK(row.flops_counted_mul > 0);
        }
    }
    CHECK(percentage_reduction(1234.0, 1234.0) == 0.0);
    CHECK(percentage_reduction(200.0, 50.0) == 75.0);
    CHECK(!rep.notes.empty());

    const auto parsed = parse_complexity_csv(report_to_csv(rep));
    CHECK(parsed == rep.rows);
    const auto j = nlohmann::json::parse(report_to_json(rep));
    CHECK(j.contains("conventions"));
    CHECK(j["rows"].size() == 6);
    CHECK_THROWS_AS(parse_complexity_csv("n,model\n1,stnn\n"), IoError);
}

TEST_CASE("default depth schedule") {
    CHECK(default_lambda(8) == 4);
    CHECK(default_lambda(16) == 5);
    CHECK(default_lambda(32) == 6);
    CHECK(default_lambda(4) == 2);
    CHECK(default_lambda(64) == 6);
    CHECK(default_lambda(2) == 1);
}
