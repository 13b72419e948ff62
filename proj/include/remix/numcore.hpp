#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "remix/error.hpp"

namespace remix {

using Vec = std::vector<double>;

// Unit-norm vector. The only ways to obtain one are normalize() and
// Embedding::from_unit(), so every instance satisfies ||v|| = 1 within 1e-6.
class Embedding {
public:
    Embedding() = default;

    // Wraps a vector that is already unit length; throws ZeroVector if it is
    // not within tol of 1.
    static Embedding from_unit(Vec values, double tol = 1e-6);

    const Vec& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> span() const noexcept { return values_; }

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    explicit Embedding(Vec values) : values_(std::move(values)) {}
    friend Embedding normalize(std::span<const double> v);

    Vec values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

// Throws ZeroVector when ||v|| <= 1e-12.
Embedding normalize(std::span<const double> v);

// Pulls a gradient through u = v / ||v||: returns (I - u u^T) grad_u / ||v||.
Vec normalize_backward(std::span<const double> v, std::span<const double> grad_u);

// Dot product of unit vectors clamped to [-1, 1].
double cosine(const Embedding& a, const Embedding& b);

double logsumexp(std::span<const double> xs);

// target - logsumexp(pool); the caller guarantees target is one of the pool
// values. Throws EmptyPool on an empty pool.
double log_softmax_term(double target, std::span<const double> pool);

// Central differences per coordinate. Throws NonFiniteEvaluation if fn
// returns NaN/Inf at any probe point.
Vec finite_diff_grad(const std::function<double(const Vec&)>& fn, const Vec& x, double h);

// Largest |a_k - b_k| / max(|a_k|, |b_k|, floor) over all coordinates.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-8);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

// Seeded generator with named substreams. A substream's seed depends only on
// the parent seed and the name, never on how much of the parent was consumed,
// so enabling or disabling one subsystem leaves the others' draws untouched.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    Rng substream(std::string_view name) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p);
    std::size_t index(std::size_t n);  // uniform in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::swap(xs[i - 1], xs[index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace remix
