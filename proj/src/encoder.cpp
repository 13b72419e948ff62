#include "remix/encoder.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <exception>
#include <thread>

namespace remix {

std::string to_string(Activation act) {
    return act == Activation::Tanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw Error(ErrorCode::InvalidConfig, "unknown activation '" + name + "'");
}

EncoderParams::EncoderParams(std::vector<int> dims, Activation activation)
    : dims_(std::move(dims)), activation_(activation) {
    if (dims_.size() < 2) throw Error(ErrorCode::InvalidConfig, "an encoder needs at least one layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        if (dims_[l] <= 0 || dims_[l + 1] <= 0) {
            throw Error(ErrorCode::InvalidConfig, "layer dimensions must be positive");
        }
        offsets_.push_back(total);
        total += static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1]) +
                 static_cast<std::size_t>(dims_[l + 1]);
    }
    data_.assign(total, 0.0);
}

std::size_t EncoderParams::weight_offset(std::size_t layer) const { return offsets_.at(layer); }

std::span<double> EncoderParams::weight(std::size_t layer) {
    const auto n = static_cast<std::size_t>(dims_[layer]) * static_cast<std::size_t>(dims_[layer + 1]);
    return std::span<double>(data_).subspan(weight_offset(layer), n);
}

std::span<const double> EncoderParams::weight(std::size_t layer) const {
    const auto n = static_cast<std::size_t>(dims_[layer]) * static_cast<std::size_t>(dims_[layer + 1]);
    return std::span<const double>(data_).subspan(weight_offset(layer), n);
}

std::span<double> EncoderParams::bias(std::size_t layer) {
    const auto n = static_cast<std::size_t>(dims_[layer]) * static_cast<std::size_t>(dims_[layer + 1]);
    return std::span<double>(data_).subspan(weight_offset(layer) + n,
                                            static_cast<std::size_t>(dims_[layer + 1]));
}

std::span<const double> EncoderParams::bias(std::size_t layer) const {
    const auto n = static_cast<std::size_t>(dims_[layer]) * static_cast<std::size_t>(dims_[layer + 1]);
    return std::span<const double>(data_).subspan(weight_offset(layer) + n,
                                                  static_cast<std::size_t>(dims_[layer + 1]));
}

std::uint64_t EncoderParams::fingerprint() const {
    std::uint64_t h = fnv1a64(to_string(activation_));
    for (int d : dims_) h = splitmix64(h ^ static_cast<std::uint64_t>(d));
    for (double x : data_) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &x, sizeof bits);
        h = (h ^ bits) * 1099511628211ULL;
    }
    return splitmix64(h);
}

EncoderParams init_encoder(std::vector<int> dims, Activation activation, Rng& rng) {
    EncoderParams params(std::move(dims), activation);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const double fan = params.dims()[l] + params.dims()[l + 1];
        const double limit = std::sqrt(6.0 / fan);
        for (auto& w : params.weight(l)) w = rng.uniform(-limit, limit);
    }
    return params;
}

namespace {

double activate(Activation act, double x) { return act == Activation::Tanh ? std::tanh(x) : x; }

void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, Vec& out) {
    const std::size_t rows = b.size();
    const std::size_t cols = x.size();
    out.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* row = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

void check_input(const EncoderParams& params, std::span<const double> features) {
    if (params.num_layers() == 0) throw Error(ErrorCode::ShapeMismatch, "uninitialized encoder");
    if (features.size() != static_cast<std::size_t>(params.input_dim())) {
        throw Error(ErrorCode::DimensionMismatch, "encoder expects " + std::to_string(params.input_dim()) +
                                                      " features, got " + std::to_string(features.size()));
    }
}

}  // namespace

ForwardResult forward(const EncoderParams& params, std::span<const double> features) {
    check_input(params, features);
    ForwardResult result;
    auto& cache = result.cache;
    cache.fingerprint = params.fingerprint();
    Vec x(features.begin(), features.end());
    const std::size_t layers = params.num_layers();
    for (std::size_t l = 0; l < layers; ++l) {
        Vec z;
        affine(params.weight(l), params.bias(l), x, z);
        cache.inputs.push_back(std::move(x));
        x = z;
        if (l + 1 < layers) {
            for (auto& v : x) v = activate(params.activation(), v);
        }
        cache.preacts.push_back(std::move(z));
    }
    result.embedding = normalize(cache.preacts.back());
    return result;
}

Embedding embed(const EncoderParams& params, std::span<const double> features) {
    check_input(params, features);
    Vec x(features.begin(), features.end());
    Vec z;
    const std::size_t layers = params.num_layers();
    for (std::size_t l = 0; l < layers; ++l) {
        affine(params.weight(l), params.bias(l), x, z);
        x.swap(z);
        if (l + 1 < layers) {
            for (auto& v : x) v = activate(params.activation(), v);
        }
    }
    return normalize(x);
}

std::vector<Embedding> embed_many(const EncoderParams& params,
                                  std::span<const std::span<const double>> inputs, int workers) {
    std::vector<Embedding> out(inputs.size());
    const std::size_t n = inputs.size();
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = embed(params, inputs[i]);
        return out;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) out[i] = embed(params, inputs[i]);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

void backward_accumulate(const EncoderParams& params, std::uint64_t fingerprint,
                         const ForwardCache& cache, std::span<const double> grad_embedding,
                         EncoderGrads& grads) {
    if (cache.fingerprint != fingerprint || cache.preacts.size() != params.num_layers()) {
        throw Error(ErrorCode::StaleCache, "forward cache does not belong to these parameters");
    }
    if (!grads.same_shape(params)) throw Error(ErrorCode::ShapeMismatch, "gradient buffer shape");
    if (grad_embedding.size() != static_cast<std::size_t>(params.output_dim())) {
        throw Error(ErrorCode::DimensionMismatch, "embedding gradient size");
    }

    Vec delta = normalize_backward(cache.preacts.back(), grad_embedding);
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const Vec& x = cache.inputs[l];
        const std::size_t rows = delta.size();
        const std::size_t cols = x.size();
        auto gw = grads.weight(l);
        auto gb = grads.bias(l);
        for (std::size_t r = 0; r < rows; ++r) {
            gb[r] += delta[r];
            double* row = gw.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) row[c] += delta[r] * x[c];
        }
        if (l == 0) break;
        const auto w = params.weight(l);
        Vec next(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = w.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) next[c] += row[c] * delta[r];
        }
        if (params.activation() == Activation::Tanh) {
            const Vec& z = cache.preacts[l - 1];
            for (std::size_t c = 0; c < cols; ++c) {
                const double t = std::tanh(z[c]);
                next[c] *= 1.0 - t * t;
            }
        }
        delta = std::move(next);
    }
}

EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      std::span<const double> grad_embedding) {
    EncoderGrads grads(params.dims(), params.activation());
    backward_accumulate(params, params.fingerprint(), cache, grad_embedding, grads);
    return grads;
}

OptimizerState OptimizerState::for_params(const EncoderParams& params, const AdamConfig& config) {
    OptimizerState opt;
    opt.config = config;
    opt.first_moment.assign(params.size(), 0.0);
    opt.second_moment.assign(params.size(), 0.0);
    return opt;
}

double effective_lr(const AdamConfig& config, int epoch) {
    if (config.warmup_epochs <= 0) return config.base_lr;
    const double ramp = static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
    return config.base_lr * std::min(1.0, ramp);
}

double adam_step(OptimizerState& opt, EncoderParams& params, const EncoderGrads& grads, int epoch) {
    if (!grads.same_shape(params) || opt.first_moment.size() != params.size() ||
        opt.second_moment.size() != params.size()) {
        throw Error(ErrorCode::ShapeMismatch, "optimizer, parameter, and gradient shapes differ");
    }
    const auto& c = opt.config;
    const double lr = effective_lr(c, epoch);
    opt.step += 1;
    const double t = static_cast<double>(opt.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    auto& p = params.flat();
    const auto& g = grads.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
        opt.first_moment[i] = c.beta1 * opt.first_moment[i] + (1.0 - c.beta1) * g[i];
        opt.second_moment[i] = c.beta2 * opt.second_moment[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double m_hat = opt.first_moment[i] / correction1;
        const double v_hat = opt.second_moment[i] / correction2;
        p[i] -= lr * c.weight_decay * p[i];
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    return lr;
}

void ema_update(EncoderParams& momentum, const EncoderParams& encoder, double lambda) {
    if (!momentum.same_shape(encoder)) throw Error(ErrorCode::ShapeMismatch, "EMA between different shapes");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda must lie in [0, 1]");
    auto& m = momentum.flat();
    const auto& e = encoder.flat();
    if (lambda == 0.0) {
        m = e;
        return;
    }
    if (lambda == 1.0) return;
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = lambda * m[i] + (1.0 - lambda) * e[i];
}

}  // namespace remix
