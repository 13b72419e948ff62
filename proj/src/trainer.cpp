#include "remix/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include "remix/evalkit.hpp"
#include "remix/pseudolabel.hpp"

namespace remix {

using json = nlohmann::json;

std::vector<int> ModelConfig::layer_dims(int input_dim) const {
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(embedding_dim);
    return dims;
}

void TrainConfig::validate() const {
    loss.validate();
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda must lie in [0, 1]");
    if (epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 0");
    if (iterations < 1) throw Error(ErrorCode::InvalidConfig, "iterations per epoch must be >= 1");
    if (!(dbscan_eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "dbscan eps must be > 0");
    if (dbscan_min_pts < 1) throw Error(ErrorCode::InvalidConfig, "dbscan min_pts must be >= 1");
    if (batch.multi_labels < 0 || batch.single_labels < 0 || batch.multi_per_label < 1 ||
        batch.single_per_label < 1) {
        throw Error(ErrorCode::InvalidConfig, "batch label counts must be >= 0 and per-label counts >= 1");
    }
    if (batch.multi_labels == 0 && !single_cam_active()) {
        throw Error(ErrorCode::InvalidConfig, "empty mini-batch");
    }
    if (!(augment.sigma >= 0.0) || !(augment.p_drop >= 0.0 && augment.p_drop <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "augmentation needs sigma >= 0 and p_drop in [0, 1]");
    }
    if (!(adam.base_lr > 0.0) || !(adam.weight_decay >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "learning rate must be > 0 and weight decay >= 0");
    }
    if (pseudo_label_budget < 0) throw Error(ErrorCode::InvalidConfig, "pseudo-label budget must be >= 0");
    if (checkpoint_every < 0) throw Error(ErrorCode::InvalidConfig, "checkpoint_every must be >= 0");
    if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
}

std::int64_t TrainConfig::effective_budget() const {
    if (pseudo_label_budget > 0) return pseudo_label_budget;
    return static_cast<std::int64_t>(batch.single_size()) * iterations;
}

nlohmann::ordered_json to_json(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["loss_total"] = m.loss_total;
    j["loss_ins"] = m.loss_ins;
    j["loss_aug"] = m.loss_aug;
    j["loss_cen"] = m.loss_cen;
    j["loss_cc"] = m.loss_cc;
    j["pseudo_clusters"] = m.pseudo_clusters;
    j["pseudo_noise"] = m.pseudo_noise;
    j["purity"] = m.purity ? nlohmann::ordered_json(*m.purity) : nlohmann::ordered_json(nullptr);
    j["lr"] = m.lr;
    return j;
}

TrainState init_train_state(int input_dim, const ModelConfig& model, const TrainConfig& cfg,
                            std::uint64_t seed) {
    Rng init = Rng(seed).substream("init");
    TrainState state;
    state.encoder = init_encoder(model.layer_dims(input_dim), model.activation, init);
    state.momentum = state.encoder;
    state.optimizer = OptimizerState::for_params(state.encoder, cfg.adam);
    return state;
}

namespace {

CentroidBank multi_camera_bank(const EncoderParams& momentum, const MultiCamDataset& multi, int epoch,
                               int workers) {
    const auto embeddings = extract(momentum, multi.samples(), workers);
    std::vector<BatchLabel> labels;
    std::vector<std::optional<int>> cameras;
    labels.reserve(embeddings.size());
    cameras.reserve(embeddings.size());
    for (const auto& s : multi.samples()) {
        labels.push_back(BatchLabel{Source::Multi, *s.identity});
        cameras.push_back(s.camera);
    }
    return build_centroids(embeddings, labels, cameras, epoch);
}

}  // namespace

void run_epoch(TrainState& state, const MultiCamDataset& multi, const SingleCamCorpus& corpus,
               const TrainConfig& cfg, std::uint64_t seed, const TrainObserver& observer) {
    cfg.validate();
    const int epoch = state.epoch;
    const std::string tag = std::to_string(epoch);
    const Rng root(seed);
    Rng sampler = root.substream("sampler").substream(tag);
    Rng aug_rng = root.substream("augment").substream(tag);
    Rng label_rng = root.substream("pseudolabel").substream(tag);

    CentroidBank bank = multi_camera_bank(state.momentum, multi, epoch, cfg.workers);
    if (cfg.loss.gamma != 0.0 && bank.multi_camera_label_count() == 0) {
        std::cerr << "warning: no identity is seen by two cameras; camera-centroid loss is 0 for epoch "
                  << epoch << '\n';
    }

    PseudoLabeledPool pool;
    BatchSizes sizes = cfg.batch;
    if (cfg.single_cam_active()) {
        PseudoLabelConfig pl;
        pl.eps = cfg.dbscan_eps;
        pl.min_pts = cfg.dbscan_min_pts;
        pl.budget = cfg.effective_budget();
        pl.workers = cfg.workers;
        pool = pseudo_label_epoch(corpus, state.momentum, pl, label_rng);
        for (const auto& c : pool.clusters) {
            bank.set_label_centroid(BatchLabel{Source::Single, c.pseudo_label}, c.centroid);
        }
    } else {
        sizes.single_labels = 0;
    }
    state.bank = std::move(bank);
    state.pool = std::move(pool);

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = effective_lr(state.optimizer.config, epoch);
    EncoderGrads grads(state.encoder.dims(), state.encoder.activation());
    for (int it = 0; it < cfg.iterations; ++it) {
        const MiniBatch batch = compose_batch(multi, state.pool, sizes, sampler);
        BatchView view;
        std::vector<ForwardCache> caches;
        const std::size_t n = batch.size();
        view.f.reserve(n);
        view.m.reserve(n);
        caches.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& item = batch[i];
            const Vec augmented = augment(item.sample->features, cfg.augment, aug_rng);
            auto fwd = forward(state.encoder, augmented);
            view.f.push_back(std::move(fwd.embedding));
            caches.push_back(std::move(fwd.cache));
            view.m.push_back(embed(state.momentum, item.sample->features));
            view.labels.push_back(item.label);
            view.cameras.push_back(item.camera);
        }

        const TotalLoss loss = total_loss(view, state.bank, cfg.loss);
        std::fill(grads.flat().begin(), grads.flat().end(), 0.0);
        const auto fingerprint = state.encoder.fingerprint();
        for (std::size_t i = 0; i < n; ++i) {
            backward_accumulate(state.encoder, fingerprint, caches[i], loss.grads[i], grads);
        }
        if (observer) observer(TrainEvent::Backward, state);
        adam_step(state.optimizer, state.encoder, grads, epoch);
        if (observer) observer(TrainEvent::AdamStep, state);
        ema_update(state.momentum, state.encoder, cfg.lambda);
        if (observer) observer(TrainEvent::EmaUpdate, state);

        metrics.loss_total += loss.value;
        metrics.loss_ins += loss.instance;
        metrics.loss_aug += loss.augmentation;
        metrics.loss_cen += loss.centroids;
        metrics.loss_cc += loss.camera_centroids;
    }
    const double inv = 1.0 / static_cast<double>(cfg.iterations);
    metrics.loss_total *= inv;
    metrics.loss_ins *= inv;
    metrics.loss_aug *= inv;
    metrics.loss_cen *= inv;
    metrics.loss_cc *= inv;
    metrics.pseudo_clusters = state.pool.clusters.size();
    metrics.pseudo_noise = state.pool.noise_count;
    if (!state.pool.empty()) metrics.purity = cluster_purity(state.pool);
    state.metrics.push_back(metrics);
    state.epoch += 1;
}

namespace {

void checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg,
                const json& echo) {
    if (cfg.lambda == 0.0 && state.momentum != state.encoder) {
        throw std::logic_error("lambda = 0 but the momentum encoder differs from the encoder");
    }
    save_checkpoint(path, state, echo);
}

}  // namespace

TrainResult train(const MultiCamDataset& multi, const SingleCamCorpus& corpus, const ModelConfig& model,
                  const TrainConfig& cfg, std::uint64_t seed, const CheckpointOptions& ckpt,
                  const TrainObserver& observer) {
    cfg.validate();
    if (multi.samples().empty()) throw Error(ErrorCode::InvalidConfig, "empty multi-camera dataset");
    TrainResult result;
    result.state = init_train_state(static_cast<int>(multi.dim()), model, cfg, seed);
    auto& state = result.state;
    const bool saving = !ckpt.path.empty();
    for (int e = 0; e < cfg.epochs; ++e) {
        TrainState before = saving ? state : TrainState{};
        try {
            run_epoch(state, multi, corpus, cfg, seed, observer);
        } catch (...) {
            if (saving) {
                auto partial = ckpt.path;
                partial += ".partial";
                save_checkpoint(partial, before, ckpt.config_echo);
            }
            throw;
        }
        if (saving && cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
            checkpoint(ckpt.path, state, cfg, ckpt.config_echo);
        }
    }
    if (saving) checkpoint(ckpt.path, state, cfg, ckpt.config_echo);
    result.metrics = state.metrics;
    return result;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const json& config_echo) {
    const auto& opt = state.optimizer;
    nlohmann::ordered_json j;
    j["format"] = "remix-ckpt";
    j["version"] = 1;
    j["config"] = nlohmann::ordered_json::parse(config_echo.dump());
    j["model"] = {{"dims", state.encoder.dims()}, {"activation", to_string(state.encoder.activation())}};
    j["encoder"] = state.encoder.flat();
    j["momentum"] = state.momentum.flat();
    j["optimizer"] = {
        {"step", opt.step},
        {"base_lr", opt.config.base_lr},
        {"weight_decay", opt.config.weight_decay},
        {"beta1", opt.config.beta1},
        {"beta2", opt.config.beta2},
        {"eps", opt.config.eps},
        {"warmup_epochs", opt.config.warmup_epochs},
        {"first_moment", opt.first_moment},
        {"second_moment", opt.second_moment},
    };
    j["epoch"] = state.epoch;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "remix-ckpt") {
        throw Error(ErrorCode::VersionMismatch, path.string() + " is not a remix-ckpt file");
    }
    if (j.value("version", -1) != 1) {
        throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint version in " + path.string());
    }
    try {
        Checkpoint ck;
        ck.config = j.at("config");
        const auto dims = j.at("model").at("dims").get<std::vector<int>>();
        const auto act = activation_from_string(j.at("model").at("activation").get<std::string>());
        ck.encoder = EncoderParams(dims, act);
        ck.momentum = EncoderParams(dims, act);
        auto fill = [&](EncoderParams& p, const json& arr) {
            auto values = arr.get<Vec>();
            if (values.size() != p.size()) throw Error(ErrorCode::ShapeMismatch, "parameter count mismatch");
            p.flat() = std::move(values);
        };
        fill(ck.encoder, j.at("encoder"));
        fill(ck.momentum, j.at("momentum"));
        const auto& o = j.at("optimizer");
        ck.optimizer.step = o.at("step").get<std::int64_t>();
        ck.optimizer.config.base_lr = o.at("base_lr").get<double>();
        ck.optimizer.config.weight_decay = o.at("weight_decay").get<double>();
        ck.optimizer.config.beta1 = o.at("beta1").get<double>();
        ck.optimizer.config.beta2 = o.at("beta2").get<double>();
        ck.optimizer.config.eps = o.at("eps").get<double>();
        ck.optimizer.config.warmup_epochs = o.at("warmup_epochs").get<int>();
        ck.optimizer.first_moment = o.at("first_moment").get<Vec>();
        ck.optimizer.second_moment = o.at("second_moment").get<Vec>();
        ck.epoch = j.at("epoch").get<int>();
        return ck;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
    }
}

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write metrics log " + path.string());
    for (const auto& m : metrics) out << to_json(m).dump() << '\n';
}

}  // namespace remix
