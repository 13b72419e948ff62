#include "remix/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <functional>

#include "remix/encoder.hpp"
#include "remix/losses.hpp"

namespace remix {

namespace {

struct Instance {
    EncoderParams encoder;
    std::vector<Vec> augmented;
    std::vector<Embedding> m;
    std::vector<BatchLabel> labels;
    std::vector<std::optional<int>> cameras;
    CentroidBank bank;
};

Vec gaussian(std::size_t d, double scale, Rng& rng) {
    Vec v(d);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

EncoderParams random_encoder(const GradcheckOptions& o, Rng& rng) {
    auto p = init_encoder({o.input_dim, o.hidden_dim, o.embedding_dim}, Activation::Tanh, rng);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        for (auto& b : p.bias(l)) b = rng.uniform(-0.1, 0.1);
    }
    return p;
}

Instance make_instance(const GradcheckOptions& o, Rng& rng) {
    Instance inst;
    inst.encoder = random_encoder(o, rng);
    const EncoderParams momentum = random_encoder(o, rng);
    const auto d = static_cast<std::size_t>(o.input_dim);
    const int per_source = o.batch_size / 2;
    const int cameras = 3;

    for (int i = 0; i < o.batch_size; ++i) {
        const bool multi = i < per_source;
        const int label = (multi ? i : i - per_source) / 2;
        const Vec x = gaussian(d, 1.0, rng);
        Vec aug = x;
        for (auto& v : aug) v += 0.1 * rng.normal();
        inst.augmented.push_back(std::move(aug));
        inst.m.push_back(embed(momentum, x));
        inst.labels.push_back(BatchLabel{multi ? Source::Multi : Source::Single, label});
        inst.cameras.push_back(multi ? std::optional<int>(static_cast<int>(rng.index(cameras))) : std::nullopt);
    }

    // Centroids from a separate draw of momentum embeddings per label.
    std::vector<Embedding> pool;
    std::vector<BatchLabel> labels;
    std::vector<std::optional<int>> cams;
    for (const auto& l : inst.labels) {
        if (std::find(labels.begin(), labels.end(), l) != labels.end()) continue;
        for (int c = 0; c < cameras; ++c) {
            for (int k = 0; k < 2; ++k) {
                pool.push_back(embed(momentum, gaussian(d, 1.0, rng)));
                labels.push_back(l);
                cams.push_back(l.source == Source::Multi ? std::optional<int>(c) : std::nullopt);
            }
        }
    }
    inst.bank = build_centroids(pool, labels, cams);
    return inst;
}

using LossFn = std::function<LossResult(const BatchView&, const CentroidBank&)>;

BatchView view_for(const Instance& inst, const EncoderParams& params, std::vector<ForwardCache>* caches) {
    BatchView view;
    for (std::size_t i = 0; i < inst.augmented.size(); ++i) {
        auto fwd = forward(params, inst.augmented[i]);
        view.f.push_back(std::move(fwd.embedding));
        if (caches) caches->push_back(std::move(fwd.cache));
    }
    view.m = inst.m;
    view.labels = inst.labels;
    view.cameras = inst.cameras;
    return view;
}

}  // namespace

std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options) {
    const LossConfig t;
    const std::vector<std::pair<std::string, LossFn>> losses = {
        {"instance",
         [&](const BatchView& v, const CentroidBank&) { return instance_loss(v, t.tau_ins_multi, t.tau_ins_single); }},
        {"augmentation", [&](const BatchView& v, const CentroidBank&) { return augmentation_loss(v, t.tau_aug); }},
        {"centroids",
         [&](const BatchView& v, const CentroidBank& b) {
             return centroids_loss(v, b, t.tau_cen_multi, t.tau_cen_single);
         }},
        {"camera_centroids",
         [&](const BatchView& v, const CentroidBank& b) { return camera_centroids_loss(v, b, t.tau_cc); }},
    };

    std::vector<GradcheckLine> lines;
    for (const auto& [name, fn] : losses) lines.push_back(GradcheckLine{name, 0.0, false});

    const Rng root = Rng(options.seed).substream("gradcheck");
    for (int b = 0; b < options.batches; ++b) {
        Rng rng = root.substream(std::to_string(b));
        const Instance inst = make_instance(options, rng);
        for (std::size_t k = 0; k < losses.size(); ++k) {
            const auto& fn = losses[k].second;
            std::vector<ForwardCache> caches;
            const BatchView view = view_for(inst, inst.encoder, &caches);
            const LossResult result = fn(view, inst.bank);
            EncoderGrads grads(inst.encoder.dims(), inst.encoder.activation());
            const auto fp = inst.encoder.fingerprint();
            for (std::size_t i = 0; i < caches.size(); ++i) {
                backward_accumulate(inst.encoder, fp, caches[i], result.grads[i], grads);
            }
            if (options.corrupt_gradient) grads.flat()[0] += 1e-2 * (1.0 + std::abs(grads.flat()[0]));

            EncoderParams probe = inst.encoder;
            const auto numeric = finite_diff_grad(
                [&](const Vec& theta) {
                    probe.flat() = theta;
                    return fn(view_for(inst, probe, nullptr), inst.bank).value;
                },
                inst.encoder.flat(), options.step);
            const double err = max_relative_error(grads.flat(), numeric, 1e-6);
            lines[k].max_relative_error = std::max(lines[k].max_relative_error, err);
        }
    }
    for (auto& line : lines) line.pass = line.max_relative_error <= options.tolerance;
    return lines;
}

}  // namespace remix
