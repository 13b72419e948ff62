#include "remix/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace remix {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InsufficientLabels: return "InsufficientLabels";
        case ErrorCode::StaleCache: return "StaleCache";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::UnresolvedLabel: return "UnresolvedLabel";
        case ErrorCode::EmptyLabel: return "EmptyLabel";
        case ErrorCode::BudgetUnreachable: return "BudgetUnreachable";
        case ErrorCode::NoValidPositive: return "NoValidPositive";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
    }
    return "Unknown";
}

Embedding Embedding::from_unit(Vec values, double tol) {
    const double n = norm(values);
    if (!(std::abs(n - 1.0) <= tol)) {
        throw Error(ErrorCode::ZeroVector, "vector norm " + std::to_string(n) + " is not unit");
    }
    return Embedding(std::move(values));
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Embedding normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!(n > 1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
    Vec out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return Embedding(std::move(out));
}

Vec normalize_backward(std::span<const double> v, std::span<const double> grad_u) {
    const double n = norm(v);
    if (!(n > 1e-12)) throw Error(ErrorCode::ZeroVector, "normalization of a zero vector");
    if (grad_u.size() != v.size()) throw Error(ErrorCode::DimensionMismatch, "gradient size");
    double proj = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) proj += (v[i] / n) * grad_u[i];
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (grad_u[i] - (v[i] / n) * proj) / n;
    return out;
}

double cosine(const Embedding& a, const Embedding& b) {
    return std::clamp(dot(a.span(), b.span()), -1.0, 1.0);
}

double logsumexp(std::span<const double> xs) {
    if (xs.empty()) throw Error(ErrorCode::EmptyPool, "logsumexp of an empty pool");
    const double hi = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

double log_softmax_term(double target, std::span<const double> pool) {
    return target - logsumexp(pool);
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& fn, const Vec& x, double h) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidConfig, "finite difference step must be positive");
    Vec probe = x;
    Vec grad(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        probe[k] = x[k] + h;
        const double up = fn(probe);
        probe[k] = x[k] - h;
        const double down = fn(probe);
        probe[k] = x[k];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error(ErrorCode::NonFiniteEvaluation, "at coordinate " + std::to_string(k));
        }
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
    if (analytic.size() != numeric.size()) throw Error(ErrorCode::DimensionMismatch, "gradient sizes");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::substream(std::string_view name) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(name)));
}

double Rng::uniform() {
    // 53 random mantissa bits; the standard distributions are not portable
    // across library implementations.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidConfig, "index() over an empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return static_cast<std::size_t>(r % bound);
}

}  // namespace remix
