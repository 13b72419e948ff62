#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "remix/numcore.hpp"

using namespace remix;
using fixture::code_of;

TEST_CASE("normalize scales to unit length") {
    const Embedding u = normalize(Vec{3.0, 4.0});
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));

    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        Vec v(1 + rng.index(40));
        for (auto& x : v) x = rng.normal(0.0, 5.0);
        const Embedding e = normalize(v);
        CHECK(std::abs(norm(e.span()) - 1.0) <= 1e-9);
        const Embedding again = normalize(e.span());
        for (std::size_t k = 0; k < v.size(); ++k) CHECK(std::abs(again[k] - e[k]) <= 1e-12);
    }
}

TEST_CASE("normalize rejects near-zero vectors") {
    CHECK(code_of([] { normalize(Vec{0.0, 0.0}); }) == ErrorCode::ZeroVector);
    CHECK(code_of([] { normalize(Vec{1e-13, 0.0}); }) == ErrorCode::ZeroVector);
    CHECK_NOTHROW(normalize(Vec{2e-12, 0.0}));
}

TEST_CASE("from_unit accepts only unit vectors") {
    CHECK_NOTHROW(Embedding::from_unit({0.6, 0.8}));
    CHECK(code_of([] { Embedding::from_unit({0.6, 0.9}); }) == ErrorCode::ZeroVector);
}

TEST_CASE("cosine matches direct summation and is symmetric") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto a = oracle::random_unit(16, rng);
        const auto b = oracle::random_unit(16, rng);
        const Embedding ea = normalize(a), eb = normalize(b);
        CHECK(std::abs(cosine(ea, eb) - oracle::dot(ea.values(), eb.values())) <= 1e-12);
        CHECK(cosine(ea, eb) == cosine(eb, ea));
        CHECK(cosine(ea, ea) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const Embedding u = normalize(Vec{1.0, 2.0, 2.0});
    const Embedding v = normalize(Vec{-1.0, -2.0, -2.0});
    CHECK(cosine(u, v) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(cosine(u, v) >= -1.0);
}

TEST_CASE("dot rejects mismatched dimensions") {
    CHECK(code_of([] { dot(Vec{1.0}, Vec{1.0, 2.0}); }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([] { cosine(normalize(Vec{1.0}), normalize(Vec{1.0, 0.0})); }) ==
          ErrorCode::DimensionMismatch);
}

TEST_CASE("log_softmax_term hand values") {
    CHECK(log_softmax_term(0.0, Vec{0.0}) == 0.0);
    CHECK(log_softmax_term(10.0, Vec{10.0, 0.0}) == doctest::Approx(-4.5398899216870535e-05).epsilon(1e-12));
    CHECK(code_of([] { log_softmax_term(0.0, Vec{}); }) == ErrorCode::EmptyPool);
}

TEST_CASE("log_softmax_term is shift invariant, non-positive and stable") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        Vec pool(1 + rng.index(10));
        for (auto& x : pool) x = rng.normal(0.0, 20.0);
        const double target = pool[rng.index(pool.size())];
        const double base = log_softmax_term(target, pool);
        CHECK(base <= 0.0);
        const double c = rng.uniform(-500.0, 500.0);
        Vec shifted = pool;
        for (auto& x : shifted) x += c;
        CHECK(std::abs(log_softmax_term(target + c, shifted) - base) <= 1e-12 * std::max(1.0, std::abs(c)));
    }
    CHECK(std::isfinite(log_softmax_term(1000.0, Vec{1000.0, -1000.0, 999.0})));
    CHECK(std::isfinite(logsumexp(Vec{-1e4, -1e4})));
}

TEST_CASE("finite_diff_grad on known functions") {
    auto sq = [](const Vec& x) { return x[0] * x[0] + x[1] * x[1]; };
    const Vec g = finite_diff_grad(sq, {1.0, 2.0}, 1e-5);
    CHECK(std::abs(g[0] - 2.0) <= 1e-6);
    CHECK(std::abs(g[1] - 4.0) <= 1e-6);

    const Vec zero = finite_diff_grad([](const Vec&) { return 3.0; }, {1.0, -1.0, 0.5}, 1e-5);
    for (double z : zero) CHECK(z == 0.0);

    const Vec a{0.5, -2.0, 3.0};
    const Vec lin = finite_diff_grad([&](const Vec& x) { return oracle::dot(a, x); }, {0.1, 0.2, 0.3}, 1e-5);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(lin[k] - a[k]) <= 1e-7);

    CHECK(code_of([] {
              finite_diff_grad([](const Vec& x) { return x[0] > 0 ? std::numeric_limits<double>::infinity() : 0.0; },
                               {0.0}, 1e-5);
          }) == ErrorCode::NonFiniteEvaluation);
}

TEST_CASE("normalize_backward projects out the radial direction") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        Vec v(8), g(8);
        for (auto& x : v) x = rng.normal();
        for (auto& x : g) x = rng.normal();
        const Embedding u = normalize(v);
        const Vec gv = normalize_backward(v, g);
        CHECK(std::abs(oracle::dot(gv, u.values())) <= 1e-8);
        // against finite differences of <g, normalize(v)>
        const Vec num = finite_diff_grad([&](const Vec& x) { return oracle::dot(g, normalize(x).values()); }, v, 1e-6);
        CHECK(max_relative_error(gv, num, 1e-6) <= 1e-6);
    }
}

TEST_CASE("rng is reproducible and substreams are independent of consumption") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng fresh(7);
    Rng used(7);
    for (int i = 0; i < 1000; ++i) used.uniform();
    Rng s1 = fresh.substream("sampler"), s2 = used.substream("sampler");
    for (int i = 0; i < 100; ++i) CHECK(s1.next_u64() == s2.next_u64());

    Rng x = Rng(7).substream("augment"), y = Rng(7).substream("sampler");
    int same = 0;
    for (int i = 0; i < 100; ++i) same += x.next_u64() == y.next_u64() ? 1 : 0;
    CHECK(same == 0);
}

TEST_CASE("rng distributions have the right moments") {
    Rng rng(5);
    const int n = 200000;
    double s = 0, s2 = 0, u = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
        u += rng.uniform();
    }
    CHECK(std::abs(s / n) <= 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(u / n - 0.5) <= 4.0 * std::sqrt(1.0 / 12.0 / n));

    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.index(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) <= 400);
}

TEST_CASE("max_relative_error uses the floor for tiny values") {
    CHECK(max_relative_error(Vec{1.0, 0.0}, Vec{1.0, 1e-12}, 1e-8) == doctest::Approx(1e-4));
    CHECK(max_relative_error(Vec{2.0}, Vec{1.0}) == doctest::Approx(0.5));
}
