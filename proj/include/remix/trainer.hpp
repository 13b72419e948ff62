#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "remix/datamodel.hpp"
#include "remix/encoder.hpp"
#include "remix/losses.hpp"

namespace remix {

struct ModelConfig {
    int embedding_dim = 16;
    std::vector<int> hidden = {64};
    Activation activation = Activation::Tanh;

    std::vector<int> layer_dims(int input_dim) const;
};

struct TrainConfig {
    LossConfig loss;
    AdamConfig adam;
    BatchSizes batch;
    AugmentConfig augment;
    double lambda = 0.999;
    int epochs = 20;
    int iterations = 50;
    double dbscan_eps = 0.8;
    int dbscan_min_pts = 4;
    bool use_single_cam = true;
    // Images to pseudo-label per epoch; 0 means B_s * iterations.
    std::int64_t pseudo_label_budget = 0;
    int checkpoint_every = 5;
    int workers = 1;

    void validate() const;
    bool single_cam_active() const { return use_single_cam && batch.single_labels > 0; }
    std::int64_t effective_budget() const;
};

struct EpochMetrics {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_ins = 0.0;
    double loss_aug = 0.0;
    double loss_cen = 0.0;
    double loss_cc = 0.0;
    std::size_t pseudo_clusters = 0;
    std::size_t pseudo_noise = 0;
    std::optional<double> purity;  // empty when single-camera training is off
    double lr = 0.0;
};

nlohmann::ordered_json to_json(const EpochMetrics& m);

struct TrainState {
    EncoderParams encoder;
    EncoderParams momentum;
    OptimizerState optimizer;
    int epoch = 0;  // completed epochs
    CentroidBank bank;
    PseudoLabeledPool pool;
    std::vector<EpochMetrics> metrics;
};

// Encoder drawn from the "init" substream of `seed`; the momentum encoder
// starts as an exact copy.
TrainState init_train_state(int input_dim, const ModelConfig& model, const TrainConfig& cfg,
                            std::uint64_t seed);

enum class TrainEvent { Backward, AdamStep, EmaUpdate };

// Observer called after each step of an iteration; used by tests to check
// step ordering and that backprop never touches the momentum encoder.
using TrainObserver = std::function<void(TrainEvent, const TrainState&)>;

// One pass of the joint-training loop: refresh centroids and pseudo labels
// from the momentum encoder, then `iterations` steps of
// compose/augment/encode/loss/backprop/Adam/EMA. Appends one EpochMetrics.
void run_epoch(TrainState& state, const MultiCamDataset& multi, const SingleCamCorpus& corpus,
               const TrainConfig& cfg, std::uint64_t seed, const TrainObserver& observer = {});

struct CheckpointOptions {
    std::filesystem::path path;  // empty: no checkpoints
    nlohmann::json config_echo = nlohmann::json::object();
};

struct TrainResult {
    TrainState state;
    std::vector<EpochMetrics> metrics;
};

// Runs cfg.epochs epochs. Checkpoints every cfg.checkpoint_every epochs and
// at the end; on failure the last completed state goes to "<path>.partial"
// before the error propagates.
TrainResult train(const MultiCamDataset& multi, const SingleCamCorpus& corpus, const ModelConfig& model,
                  const TrainConfig& cfg, std::uint64_t seed, const CheckpointOptions& ckpt = {},
                  const TrainObserver& observer = {});

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const nlohmann::json& config_echo);

struct Checkpoint {
    nlohmann::json config;
    EncoderParams encoder;
    EncoderParams momentum;
    OptimizerState optimizer;
    int epoch = 0;
};

// Throws VersionMismatch for foreign or newer formats, IoError otherwise.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics);

}  // namespace remix
