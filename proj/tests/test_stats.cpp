#include "apdlh/errors.hpp"
#include "apdlh/stats.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace apdlh;
using V = std::vector<double>;

TEST_CASE("cliffs_delta examples") {
    CHECK(cliffs_delta(V{5, 5, 5}, V{5, 5, 5}) == 0.0);
    CHECK(cliffs_delta(V{2, 3}, V{0, 1}) == 1.0);
    CHECK(cliffs_delta(V{1, 2, 3}, V{2, 2, 2}) == oracle::cliffs_delta({1, 2, 3}, {2, 2, 2}));
    CHECK(cliffs_delta(V{1, 2, 3}, V{2, 2, 2}) == 0.0);
    CHECK_THROWS_AS(cliffs_delta(V{}, V{1}), EmptySample);
    CHECK_THROWS_AS(cliffs_delta(V{1}, V{}), EmptySample);
}

TEST_CASE("cliffs_delta matches the double loop and the U relation") {
    std::mt19937 rng(9001);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 50)(rng);
        const int m = std::uniform_int_distribution<int>(1, 50)(rng);
        const int hi = std::uniform_int_distribution<int>(1, 10)(rng);
        std::uniform_int_distribution<int> val(0, hi);
        V x(n), y(m);
        for (auto& v : x) v = val(rng);
        for (auto& v : y) v = val(rng);
        const double d = cliffs_delta(x, y);
        REQUIRE(d == oracle::cliffs_delta(x, y));
        CHECK(cliffs_delta(y, x) == -d);
        CHECK(std::fabs(d) <= 1.0);
        const double u = mann_whitney_u(x, y, MwMode::NormalApprox).u;
        CHECK(u == oracle::u_stat(x, y));
        CHECK(d == doctest::Approx(2.0 * u / (static_cast<double>(n) * m) - 1.0).epsilon(1e-12));
    }
}

TEST_CASE("effect labels and superiority") {
    CHECK(effect_label(0.81) == EffectLabel::Large);
    CHECK(effect_label(0.87) == EffectLabel::Large);
    CHECK(effect_label(0.57) == EffectLabel::Large);
    CHECK(effect_label(0.10) == EffectLabel::Negligible);
    CHECK(effect_label(-0.40) == EffectLabel::Medium);
    CHECK(effect_label(0.146) == EffectLabel::Negligible);
    CHECK(effect_label(0.147) == EffectLabel::Small);
    CHECK(effect_label(-0.33) == EffectLabel::Medium);
    CHECK(effect_label(0.474) == EffectLabel::Large);
    CHECK(to_string(EffectLabel::Large) == "large");
    CHECK(prob_superiority(0.81) == doctest::Approx(0.905).epsilon(1e-12));
    CHECK(prob_superiority(0) == 0.5);
    CHECK(prob_superiority(1) == 1.0);
}

TEST_CASE("Mann-Whitney examples") {
    const auto r = mann_whitney_u(V{1, 2}, V{3, 4}, MwMode::Exact);
    CHECK(r.u == 0.0);
    CHECK(r.p == doctest::Approx(1.0 / 3.0));
    const auto tie = mann_whitney_u(V{7}, V{7}, MwMode::Exact);
    CHECK(tie.u == 0.5);
    CHECK(tie.p == 1.0);
    CHECK(mann_whitney_u(V{7}, V{7}, MwMode::NormalApprox).p == 1.0);
    CHECK(mann_whitney_u(V{3, 3, 3}, V{3, 3}, MwMode::NormalApprox).p == 1.0);
    CHECK_THROWS_AS(mann_whitney_u(V(9, 1.0), V(8, 2.0), MwMode::Exact), SampleTooLargeForExact);
    CHECK_NOTHROW(mann_whitney_u(V(8, 1.0), V(8, 2.0), MwMode::Exact));
    CHECK_THROWS_AS(mann_whitney_u(V{}, V{1}, MwMode::NormalApprox), EmptySample);
}

TEST_CASE("exact p agrees with an independent enumeration") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 6)(rng);
        const int m = std::uniform_int_distribution<int>(1, 6)(rng);
        std::uniform_int_distribution<int> val(0, 4);
        V x(n), y(m);
        for (auto& v : x) v = val(rng);
        for (auto& v : y) v = val(rng);
        CHECK(mann_whitney_u(x, y, MwMode::Exact).p == doctest::Approx(oracle::mw_exact_p(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("normal approximation tracks the exact p") {
    // tie-free samples, both sides of size 3 or more
    std::mt19937 rng(31337);
    std::uniform_real_distribution<double> val(0.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = std::uniform_int_distribution<int>(3, 11)(rng);
        const int m = std::uniform_int_distribution<int>(3, 14 - n)(rng);
        V x(n), y(m);
        for (auto& v : x) v = val(rng);
        for (auto& v : y) v = val(rng);
        const double exact = mann_whitney_u(x, y, MwMode::Exact).p;
        const double approx = mann_whitney_u(x, y, MwMode::NormalApprox).p;
        CAPTURE(n);
        CAPTURE(m);
        CHECK(std::fabs(exact - approx) < 0.05);
    }
}

TEST_CASE("weighted kappa") {
    using P = std::vector<std::pair<int, int>>;
    CHECK(weighted_kappa(P{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {2, 2}}) == doctest::Approx(1.0));
    const P worst = {{0, 4}, {4, 0}, {0, 4}, {4, 0}};
    CHECK(weighted_kappa(worst) == doctest::Approx(-1.0));
    CHECK(oracle::weighted_kappa(worst, 5) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(weighted_kappa(P{{1, 1}}), EmptySample);
    CHECK_THROWS_AS(weighted_kappa(P{{2, 1}, {2, 3}}), DegenerateMarginals);
    CHECK_THROWS(weighted_kappa(P{{0, 5}, {1, 1}}));

    std::mt19937 rng(12);
    std::uniform_int_distribution<int> cat(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        P pairs;
        const int n = std::uniform_int_distribution<int>(2, 40)(rng);
        for (int i = 0; i < n; ++i) pairs.emplace_back(cat(rng), cat(rng));
        try {
            const double k = weighted_kappa(pairs);
            CHECK(k == doctest::Approx(oracle::weighted_kappa(pairs, 5)).epsilon(1e-9));
            CHECK(k <= 1.0 + 1e-12);
            // symmetric in the two raters
            P swapped;
            for (auto [a, b] : pairs) swapped.emplace_back(b, a);
            CHECK(weighted_kappa(swapped) == doctest::Approx(k).epsilon(1e-9));
        } catch (const DegenerateMarginals&) {
        }
    }

    P uniform;
    std::mt19937 rng2(2024);
    for (int i = 0; i < 10000; ++i) uniform.emplace_back(cat(rng2), cat(rng2));
    CHECK(std::fabs(weighted_kappa(uniform)) < 0.05);
}

TEST_CASE("within one point") {
    using P = std::vector<std::pair<int, int>>;
    CHECK(within_one_point_rate(P{{1, 1}, {3, 3}}) == 1.0);
    CHECK(within_one_point_rate(P{{0, 2}}) == 0.0);
    CHECK(within_one_point_rate(P{{0, 1}, {3, 3}, {4, 2}}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("binomial confidence intervals") {
    const auto a = binomial_ci(139, 150);
    CHECK(std::fabs(a.lo - 0.885) <= 0.001);
    CHECK(std::fabs(a.hi - 0.968) <= 0.001);
    const auto b = binomial_ci(116, 150);
    CHECK(std::fabs(b.lo - 0.706) <= 0.001);
    CHECK(std::fabs(b.hi - 0.840) <= 0.001);
    const auto c = binomial_ci(104, 150);
    CHECK(std::fabs(c.lo - 0.620) <= 0.001);
    CHECK(std::fabs(c.hi - 0.767) <= 0.001);

    for (long n : {1L, 7L, 50L, 150L}) {
        for (long s = 0; s <= n; ++s) {
            const auto ci = binomial_ci(s, n);
            const auto [lo, hi] = oracle::wald(s, n);
            CHECK(ci.lo == doctest::Approx(lo).epsilon(1e-12));
            CHECK(ci.hi == doctest::Approx(hi).epsilon(1e-12));
            CHECK(ci.lo >= 0.0);
            CHECK(ci.hi <= 1.0);
        }
    }
    const auto narrow = binomial_ci(300, 600);
    const auto wide = binomial_ci(75, 150);
    CHECK((narrow.hi - narrow.lo) == doctest::Approx((wide.hi - wide.lo) / 2.0));
    CHECK_THROWS_AS(binomial_ci(0, 0), EmptySample);
    CHECK(z_critical(0.95) == 1.959964);
    CHECK(z_critical(0.99) == doctest::Approx(2.5758293).epsilon(1e-6));
}

TEST_CASE("quartiles use linear interpolation") {
    CHECK(quartiles({1, 2, 3, 4}).median == 2.5);
    CHECK(quartiles({1, 2, 3, 4}).q1 == 1.75);
    CHECK(quartiles({7}).q3 == 7.0);
    std::mt19937 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        V v(std::uniform_int_distribution<int>(1, 30)(rng));
        for (auto& x : v) x = std::uniform_int_distribution<int>(0, 10)(rng);
        const auto q = quartiles(v);
        CHECK(q.q1 == doctest::Approx(oracle::quantile7(v, 0.25)));
        CHECK(q.median == doctest::Approx(oracle::quantile7(v, 0.5)));
        CHECK(q.q3 == doctest::Approx(oracle::quantile7(v, 0.75)));
        CHECK(q.q1 <= q.median);
        CHECK(q.median <= q.q3);
    }
    CHECK(mean(V{1, 2, 3, 6}) == 3.0);
}
