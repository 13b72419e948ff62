#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "remix/numcore.hpp"

namespace remix {

enum class Source { Multi, Single };

std::string_view to_string(Source source);

struct PersonSample {
    std::int64_t sample_id = 0;
    Vec features;
    std::optional<int> identity;  // empty for unlabeled single-camera frames
    std::optional<int> camera;
    Source source = Source::Multi;
    std::optional<int> video_id;
    int hidden_identity = 0;  // ground truth; evaluation only
};

// A (pseudo)label tagged with its source, so multi-camera label 3 and
// pseudo label 3 never compare equal.
struct BatchLabel {
    Source source = Source::Multi;
    int id = 0;

    friend auto operator<=>(const BatchLabel&, const BatchLabel&) = default;
};

class MultiCamDataset {
public:
    MultiCamDataset() = default;

    // Validates the labeled-data invariants and indexes samples by label and
    // by (label, camera). Throws InvalidConfig on violations.
    static MultiCamDataset build(std::vector<PersonSample> samples);

    const std::vector<PersonSample>& samples() const noexcept { return samples_; }
    int num_identities() const noexcept { return num_identities_; }
    int num_cameras() const noexcept { return num_cameras_; }
    std::size_t dim() const noexcept { return samples_.empty() ? 0 : samples_.front().features.size(); }

    // Sample indices of one identity, in ascending sample order.
    const std::vector<std::size_t>& members(int identity) const { return by_label_.at(identity); }

private:
    std::vector<PersonSample> samples_;
    std::vector<std::vector<std::size_t>> by_label_;
    int num_identities_ = 0;
    int num_cameras_ = 0;
};

struct Video {
    int video_id = 0;
    std::vector<PersonSample> frames;
};

struct SingleCamCorpus {
    std::vector<Video> videos;

    std::size_t frame_count() const;
    std::size_t dim() const;

    // Groups single-camera samples by video id in first-appearance order and
    // checks that every hidden identity stays inside one video.
    static SingleCamCorpus build(std::vector<PersonSample> samples);
};

struct GeneratorConfig {
    int dim = 32;
    int train_identities = 60;
    int train_cameras = 4;
    int images_per_camera = 3;
    int single_identities = 120;
    int videos = 30;
    int frames_per_identity = 20;
    int target_identities = 40;
    int target_cameras = 4;
    int target_images_per_camera = 3;
    // Coordinates [dim - style_dims, dim) receive the per-camera offset.
    int style_dims = 24;
    // Identity coordinates spanned by the labeled multi-camera prototypes;
    // 0 means all dim - style_dims of them (single-camera and target
    // identities always use all).
    int train_identity_dims = 4;
    double style_bias = 0.2;    // norm of the per-camera additive offset
    double style_mix = 0.3;     // scale of the per-camera linear distortion
    double domain_shift = 1.0;  // multiplier on target-domain style strength
    double sigma_cam = 0.3;     // per-image noise norm, multi-camera data
    double sigma_frame = 0.05;  // per-frame noise norm, single-camera videos

    void validate() const;
};

struct SyntheticDomains {
    MultiCamDataset train;
    SingleCamCorpus single;
    MultiCamDataset target;
};

SyntheticDomains synth_generate(const GeneratorConfig& cfg, std::uint64_t seed);

struct AugmentConfig {
    double sigma = 0.05;
    double p_drop = 0.1;
};

// Gaussian noise followed by coordinate dropout; returns a new vector.
Vec augment(std::span<const double> features, const AugmentConfig& cfg, Rng& rng);

struct PoolEntry {
    PersonSample sample;
    Embedding embedding;  // momentum embedding used for the centroid
};

struct PseudoCluster {
    int pseudo_label = 0;
    int video_id = 0;
    std::vector<PoolEntry> members;
    Embedding centroid;
};

// Pseudo-labeled single-camera data for one epoch. Pseudo labels are dense
// and equal to the cluster's position in `clusters`.
struct PseudoLabeledPool {
    std::vector<PseudoCluster> clusters;
    std::size_t noise_count = 0;
    int videos_processed = 0;

    std::size_t assigned_count() const;
    bool empty() const noexcept { return clusters.empty(); }
};

struct BatchSizes {
    int multi_labels = 8;      // N^m_P
    int multi_per_label = 4;   // N^m_K
    int single_labels = 8;     // N^s_P
    int single_per_label = 4;  // N^s_K

    int multi_size() const { return multi_labels * multi_per_label; }
    int single_size() const { return single_labels * single_per_label; }
    int total() const { return multi_size() + single_size(); }
};

struct BatchItem {
    const PersonSample* sample = nullptr;
    BatchLabel label;
    std::optional<int> camera;
};

// Multi-camera items first, grouped by label; then single-camera items.
struct MiniBatch {
    std::vector<BatchItem> multi;
    std::vector<BatchItem> single;

    std::size_t size() const { return multi.size() + single.size(); }
    const BatchItem& operator[](std::size_t i) const {
        return i < multi.size() ? multi[i] : single[i - multi.size()];
    }
};

// Throws InsufficientLabels when either source has fewer labels than asked.
MiniBatch compose_batch(const MultiCamDataset& multi, const PseudoLabeledPool& pool,
                        const BatchSizes& sizes, Rng& rng);

// Line-delimited dataset files: header {format:"remix-ds", version:1, dim:D}
// then one sample object per line.
void write_dataset(const std::filesystem::path& path, std::size_t dim,
                   const std::vector<PersonSample>& samples);

struct DatasetFile {
    std::size_t dim = 0;
    std::vector<PersonSample> samples;
};

DatasetFile read_dataset(const std::filesystem::path& path);

std::vector<PersonSample> flatten(const SingleCamCorpus& corpus);

}  // namespace remix
