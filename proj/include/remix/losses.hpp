#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "remix/datamodel.hpp"
#include "remix/numcore.hpp"

namespace remix {

// Encoder outputs f (augmented inputs) and momentum outputs m (original
// inputs) for one mini-batch. Multi-camera entries precede single-camera
// entries.
struct BatchView {
    std::vector<Embedding> f;
    std::vector<Embedding> m;
    std::vector<BatchLabel> labels;
    std::vector<std::optional<int>> cameras;

    std::size_t size() const noexcept { return f.size(); }
    std::size_t multi_count() const;

    // Throws ShapeMismatch on inconsistent sizes or source ordering.
    void validate() const;
};

// Label centroids for every (pseudo)label, camera centroids for every
// (multi-camera label, camera) pair. Rebuilt once per epoch.
class CentroidBank {
public:
    int epoch = 0;

    void set_label_centroid(BatchLabel label, Embedding centroid);
    void set_camera_centroid(int label, int camera, Embedding centroid);

    // Throws UnresolvedLabel.
    const Embedding& centroid(BatchLabel label) const;
    bool contains(BatchLabel label) const { return labels_.contains(label); }

    // (camera, centroid) pairs of one multi-camera label, ascending camera.
    std::vector<std::pair<int, const Embedding*>> camera_centroids(int label) const;

    std::size_t label_count() const noexcept { return labels_.size(); }
    std::size_t camera_centroid_count() const noexcept { return cameras_.size(); }

    // Number of multi-camera labels that have centroids under >= 2 cameras.
    std::size_t multi_camera_label_count() const;

private:
    std::map<BatchLabel, Embedding> labels_;
    std::map<std::pair<int, int>, Embedding> cameras_;
};

// Normalized means per label and, where a camera is given, per
// (label, camera). Throws EmptyLabel on empty input and ZeroVector when a
// mean vanishes.
CentroidBank build_centroids(std::span<const Embedding> embeddings, std::span<const BatchLabel> labels,
                             std::span<const std::optional<int>> cameras, int epoch = 0);

struct LossResult {
    double value = 0.0;
    std::vector<Vec> grads;  // d value / d f_i, one per batch entry
};

LossResult instance_loss(const BatchView& view, double tau_multi, double tau_single,
                         bool cross_source_negatives = false);

LossResult augmentation_loss(const BatchView& view, double tau);

LossResult centroids_loss(const BatchView& view, const CentroidBank& bank, double tau_multi,
                          double tau_single);

LossResult camera_centroids_loss(const BatchView& view, const CentroidBank& bank, double tau);

struct LossConfig {
    double tau_ins_multi = 0.1;
    double tau_ins_single = 0.2;
    double tau_aug = 0.1;
    double tau_cen_multi = 0.5;
    double tau_cen_single = 0.6;
    double tau_cc = 0.07;
    double gamma = 0.5;
    bool cross_source_negatives = false;

    void validate() const;
};

struct TotalLoss {
    double value = 0.0;
    double instance = 0.0;
    double augmentation = 0.0;
    double centroids = 0.0;
    double camera_centroids = 0.0;
    std::vector<Vec> grads;
};

// L = L_ins + L_aug + L_cen + gamma * L_cc, gradients weighted the same way.
TotalLoss total_loss(const BatchView& view, const CentroidBank& bank, const LossConfig& cfg);

}  // namespace remix
