#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "remix/numcore.hpp"

namespace remix {

enum class Activation { Tanh, Identity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

// Dense MLP parameters stored in one flat buffer: for each layer, the
// out x in row-major weight matrix followed by the bias. Hidden layers apply
// `activation`; the last layer is linear and its output is unit-normalized.
class EncoderParams {
public:
    EncoderParams() = default;
    EncoderParams(std::vector<int> dims, Activation activation);

    const std::vector<int>& dims() const noexcept { return dims_; }
    Activation activation() const noexcept { return activation_; }
    std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }

    std::span<double> weight(std::size_t layer);
    std::span<const double> weight(std::size_t layer) const;
    std::span<double> bias(std::size_t layer);
    std::span<const double> bias(std::size_t layer) const;

    Vec& flat() noexcept { return data_; }
    const Vec& flat() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_.size(); }

    bool same_shape(const EncoderParams& other) const {
        return dims_ == other.dims_ && activation_ == other.activation_;
    }

    // Hash of shape and parameter bytes; identifies the exact weights a
    // forward pass ran with.
    std::uint64_t fingerprint() const;

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

private:
    std::size_t weight_offset(std::size_t layer) const;

    std::vector<int> dims_;
    Activation activation_ = Activation::Tanh;
    Vec data_;
    std::vector<std::size_t> offsets_;
};

using EncoderGrads = EncoderParams;

// Uniform in +-sqrt(6 / (fan_in + fan_out)) per weight; zero biases.
EncoderParams init_encoder(std::vector<int> dims, Activation activation, Rng& rng);

struct ForwardCache {
    std::vector<Vec> inputs;       // input to each layer
    std::vector<Vec> preacts;      // affine output of each layer
    std::uint64_t fingerprint = 0; // params the cache was produced with
};

struct ForwardResult {
    Embedding embedding;
    ForwardCache cache;
};

ForwardResult forward(const EncoderParams& params, std::span<const double> features);

// Inference-only pass; no cache is kept.
Embedding embed(const EncoderParams& params, std::span<const double> features);

// embed() over many inputs, optionally split across `workers` threads.
// Output order matches input order regardless of the worker count.
std::vector<Embedding> embed_many(const EncoderParams& params,
                                  std::span<const std::span<const double>> inputs, int workers = 1);

// Gradients of a scalar loss with respect to every parameter, given the
// loss gradient with respect to the unit-norm output. Throws StaleCache if
// `cache` was produced with different parameters.
EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      std::span<const double> grad_embedding);

// Same as backward() but accumulates into `grads`, and takes the parameter
// fingerprint precomputed by the caller (one hash per batch).
void backward_accumulate(const EncoderParams& params, std::uint64_t fingerprint,
                         const ForwardCache& cache, std::span<const double> grad_embedding,
                         EncoderGrads& grads);

struct AdamConfig {
    double base_lr = 0.00035;
    double weight_decay = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_epochs = 10;
};

struct OptimizerState {
    AdamConfig config;
    Vec first_moment;
    Vec second_moment;
    std::int64_t step = 0;

    static OptimizerState for_params(const EncoderParams& params, const AdamConfig& config);
};

// base * min(1, (epoch + 1) / warmup); base when warmup <= 0.
double effective_lr(const AdamConfig& config, int epoch);

// One AdamW update in place with decoupled weight decay. Returns the
// learning rate that was applied.
double adam_step(OptimizerState& opt, EncoderParams& params, const EncoderGrads& grads, int epoch);

// momentum <- lambda * momentum + (1 - lambda) * encoder, elementwise.
void ema_update(EncoderParams& momentum, const EncoderParams& encoder, double lambda);

}  // namespace remix
