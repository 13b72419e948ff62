#include "remix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace remix {

namespace {

void add_scaled(Vec& acc, std::span<const double> v, double scale) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += scale * v[k];
}

std::vector<Vec> zero_grads(const BatchView& view) {
    const std::size_t dim = view.f.empty() ? 0 : view.f.front().size();
    return std::vector<Vec>(view.size(), Vec(dim, 0.0));
}

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidConfig, "temperatures must be > 0");
}

// Distinct labels in order of first appearance.
std::vector<BatchLabel> distinct_labels(const BatchView& view) {
    std::vector<BatchLabel> out;
    for (const auto& l : view.labels) {
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    }
    return out;
}

// Softmax cross-entropy of `target` against logits computed as
// dot(f, proxies[q]) / tau. Adds d(-log p_target)/d f to `grad` with weight
// `scale` and returns -log p_target.
double proxy_term(const Embedding& f, std::span<const Embedding* const> proxies, std::size_t target,
                  double tau, double scale, Vec& grad) {
    std::vector<double> logits(proxies.size());
    for (std::size_t q = 0; q < proxies.size(); ++q) logits[q] = dot(f.span(), proxies[q]->span()) / tau;
    const double lse = logsumexp(logits);
    for (std::size_t q = 0; q < proxies.size(); ++q) {
        add_scaled(grad, proxies[q]->span(), scale * std::exp(logits[q] - lse) / tau);
    }
    add_scaled(grad, proxies[target]->span(), -scale / tau);
    return -log_softmax_term(logits[target], logits);
}

}  // namespace

std::size_t BatchView::multi_count() const {
    std::size_t n = 0;
    while (n < labels.size() && labels[n].source == Source::Multi) ++n;
    return n;
}

void BatchView::validate() const {
    const std::size_t n = f.size();
    if (m.size() != n || labels.size() != n || cameras.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "batch view fields have different lengths");
    }
    const std::size_t split = multi_count();
    for (std::size_t i = split; i < n; ++i) {
        if (labels[i].source != Source::Single) {
            throw Error(ErrorCode::ShapeMismatch, "multi-camera entries must precede single-camera entries");
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (f[i].size() != f.front().size() || m[i].size() != f.front().size()) {
            throw Error(ErrorCode::DimensionMismatch, "embedding dimensions differ within the batch");
        }
    }
}

void CentroidBank::set_label_centroid(BatchLabel label, Embedding centroid) {
    labels_.insert_or_assign(label, std::move(centroid));
}

void CentroidBank::set_camera_centroid(int label, int camera, Embedding centroid) {
    cameras_.insert_or_assign({label, camera}, std::move(centroid));
}

const Embedding& CentroidBank::centroid(BatchLabel label) const {
    auto it = labels_.find(label);
    if (it == labels_.end()) {
        throw Error(ErrorCode::UnresolvedLabel, std::string(to_string(label.source)) + " label " +
                                                    std::to_string(label.id) + " has no centroid");
    }
    return it->second;
}

std::vector<std::pair<int, const Embedding*>> CentroidBank::camera_centroids(int label) const {
    std::vector<std::pair<int, const Embedding*>> out;
    for (auto it = cameras_.lower_bound({label, std::numeric_limits<int>::min()});
         it != cameras_.end() && it->first.first == label; ++it) {
        out.emplace_back(it->first.second, &it->second);
    }
    return out;
}

std::size_t CentroidBank::multi_camera_label_count() const {
    std::size_t n = 0;
    for (auto it = cameras_.begin(); it != cameras_.end();) {
        const int label = it->first.first;
        std::size_t cams = 0;
        for (; it != cameras_.end() && it->first.first == label; ++it) ++cams;
        if (cams >= 2) ++n;
    }
    return n;
}

CentroidBank build_centroids(std::span<const Embedding> embeddings, std::span<const BatchLabel> labels,
                             std::span<const std::optional<int>> cameras, int epoch) {
    if (embeddings.empty()) throw Error(ErrorCode::EmptyLabel, "no embeddings to build centroids from");
    if (labels.size() != embeddings.size() || cameras.size() != embeddings.size()) {
        throw Error(ErrorCode::ShapeMismatch, "embeddings, labels, and cameras differ in length");
    }
    const std::size_t dim = embeddings.front().size();
    std::map<BatchLabel, Vec> label_sums;
    std::map<std::pair<int, int>, Vec> camera_sums;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].size() != dim) throw Error(ErrorCode::DimensionMismatch, "embedding sizes differ");
        auto& acc = label_sums.try_emplace(labels[i], Vec(dim, 0.0)).first->second;
        add_scaled(acc, embeddings[i].span(), 1.0);
        if (cameras[i]) {
            if (labels[i].source != Source::Multi) {
                throw Error(ErrorCode::ShapeMismatch, "camera ids are only defined for multi-camera data");
            }
            auto& cam = camera_sums.try_emplace({labels[i].id, *cameras[i]}, Vec(dim, 0.0)).first->second;
            add_scaled(cam, embeddings[i].span(), 1.0);
        }
    }
    // The mean and the sum share a direction, so normalizing the sum is the
    // normalized mean.
    CentroidBank bank;
    bank.epoch = epoch;
    for (auto& [label, sum] : label_sums) bank.set_label_centroid(label, normalize(sum));
    for (auto& [key, sum] : camera_sums) bank.set_camera_centroid(key.first, key.second, normalize(sum));
    return bank;
}

LossResult instance_loss(const BatchView& view, double tau_multi, double tau_single,
                         bool cross_source_negatives) {
    view.validate();
    check_tau(tau_multi);
    check_tau(tau_single);
    LossResult out;
    out.grads = zero_grads(view);
    const std::size_t n = view.size();
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> logits(n);
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& anchor = view.labels[i];
        const double tau = anchor.source == Source::Multi ? tau_multi : tau_single;
        positives.clear();
        negatives.clear();
        for (std::size_t k = 0; k < n; ++k) {
            if (view.labels[k] == anchor) {
                positives.push_back(k);
            } else if (cross_source_negatives || view.labels[k].source == anchor.source) {
                negatives.push_back(k);
            } else {
                continue;
            }
            logits[k] = dot(view.f[i].span(), view.m[k].span()) / tau;
        }

        double hi = -std::numeric_limits<double>::infinity();
        for (auto k : positives) hi = std::max(hi, logits[k]);
        for (auto k : negatives) hi = std::max(hi, logits[k]);
        double neg_mass = 0.0;
        for (auto k : negatives) neg_mass += std::exp(logits[k] - hi);

        // Each positive j is scored against {j} plus the shared negatives.
        const double w = inv_n / static_cast<double>(positives.size());
        double anchor_loss = 0.0;
        Vec neg_dir(view.f[i].size(), 0.0);
        double neg_weight_total = 0.0;
        auto& g = out.grads[i];
        for (auto j : positives) {
            const double lse = hi + std::log(std::exp(logits[j] - hi) + neg_mass);
            anchor_loss += lse - logits[j];
            const double p_pos = std::exp(logits[j] - lse);
            add_scaled(g, view.m[j].span(), w * (p_pos - 1.0) / tau);
            neg_weight_total += std::exp(hi - lse);
        }
        // Negative k carries weight exp(logit_k - lse_j) = exp(logit_k - hi) * exp(hi - lse_j),
        // summed over positives j.
        for (auto k : negatives) {
            add_scaled(neg_dir, view.m[k].span(), std::exp(logits[k] - hi));
        }
        add_scaled(g, neg_dir, w * neg_weight_total / tau);
        out.value += inv_n * anchor_loss / static_cast<double>(positives.size());
    }
    return out;
}

LossResult augmentation_loss(const BatchView& view, double tau) {
    view.validate();
    check_tau(tau);
    LossResult out;
    out.grads = zero_grads(view);
    const std::size_t n = view.size();
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<const Embedding*> proxies;
    for (std::size_t i = 0; i < n; ++i) {
        proxies.clear();
        proxies.push_back(&view.m[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (view.labels[j] != view.labels[i]) proxies.push_back(&view.m[j]);
        }
        out.value += inv_n * proxy_term(view.f[i], proxies, 0, tau, inv_n, out.grads[i]);
    }
    return out;
}

LossResult centroids_loss(const BatchView& view, const CentroidBank& bank, double tau_multi,
                          double tau_single) {
    view.validate();
    check_tau(tau_multi);
    check_tau(tau_single);
    LossResult out;
    out.grads = zero_grads(view);
    const std::size_t n = view.size();
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);

    const auto labels = distinct_labels(view);
    std::vector<const Embedding*> proxies;
    for (const auto& l : labels) proxies.push_back(&bank.centroid(l));
    for (std::size_t i = 0; i < n; ++i) {
        const auto target = static_cast<std::size_t>(
            std::find(labels.begin(), labels.end(), view.labels[i]) - labels.begin());
        const double tau = view.labels[i].source == Source::Multi ? tau_multi : tau_single;
        out.value += inv_n * proxy_term(view.f[i], proxies, target, tau, inv_n, out.grads[i]);
    }
    return out;
}

LossResult camera_centroids_loss(const BatchView& view, const CentroidBank& bank, double tau) {
    view.validate();
    check_tau(tau);
    LossResult out;
    out.grads = zero_grads(view);
    const std::size_t split = view.multi_count();

    std::vector<int> batch_labels;
    for (std::size_t i = 0; i < split; ++i) {
        const int id = view.labels[i].id;
        if (std::find(batch_labels.begin(), batch_labels.end(), id) == batch_labels.end()) {
            batch_labels.push_back(id);
        }
    }

    struct Contribution {
        std::size_t anchor;
        std::vector<const Embedding*> pool;  // positives first
        std::size_t positives;
    };
    std::vector<Contribution> contributions;
    for (std::size_t i = 0; i < split; ++i) {
        if (!view.cameras[i]) throw Error(ErrorCode::ShapeMismatch, "multi-camera entry without a camera");
        const int label = view.labels[i].id;
        const int camera = *view.cameras[i];
        Contribution c{i, {}, 0};
        for (const auto& [cam, centroid] : bank.camera_centroids(label)) {
            if (cam != camera) c.pool.push_back(centroid);
        }
        c.positives = c.pool.size();
        if (c.positives == 0) continue;
        for (int other : batch_labels) {
            if (other == label) continue;
            for (const auto& [cam, centroid] : bank.camera_centroids(other)) c.pool.push_back(centroid);
        }
        contributions.push_back(std::move(c));
    }
    if (contributions.empty()) return out;

    const double inv_c = 1.0 / static_cast<double>(contributions.size());
    std::vector<double> logits;
    for (const auto& c : contributions) {
        const auto& f = view.f[c.anchor];
        logits.assign(c.pool.size(), 0.0);
        for (std::size_t q = 0; q < c.pool.size(); ++q) logits[q] = dot(f.span(), c.pool[q]->span()) / tau;
        const double lse = logsumexp(logits);
        const double inv_p = 1.0 / static_cast<double>(c.positives);
        double term = 0.0;
        auto& g = out.grads[c.anchor];
        for (std::size_t q = 0; q < c.pool.size(); ++q) {
            double weight = std::exp(logits[q] - lse);
            if (q < c.positives) {
                term -= inv_p * log_softmax_term(logits[q], logits);
                weight -= inv_p;
            }
            add_scaled(g, c.pool[q]->span(), inv_c * weight / tau);
        }
        out.value += inv_c * term;
    }
    return out;
}

void LossConfig::validate() const {
    for (double t : {tau_ins_multi, tau_ins_single, tau_aug, tau_cen_multi, tau_cen_single, tau_cc}) {
        check_tau(t);
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidConfig, "gamma must be >= 0");
}

TotalLoss total_loss(const BatchView& view, const CentroidBank& bank, const LossConfig& cfg) {
    cfg.validate();
    const auto ins = instance_loss(view, cfg.tau_ins_multi, cfg.tau_ins_single, cfg.cross_source_negatives);
    const auto aug = augmentation_loss(view, cfg.tau_aug);
    const auto cen = centroids_loss(view, bank, cfg.tau_cen_multi, cfg.tau_cen_single);
    const auto cc = camera_centroids_loss(view, bank, cfg.tau_cc);

    TotalLoss out;
    out.instance = ins.value;
    out.augmentation = aug.value;
    out.centroids = cen.value;
    out.camera_centroids = cc.value;
    out.value = ins.value + aug.value + cen.value;
    if (cfg.gamma != 0.0) out.value += cfg.gamma * cc.value;
    out.grads = ins.grads;
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
        auto& g = out.grads[i];
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] += aug.grads[i][k];
            g[k] += cen.grads[i][k];
            if (cfg.gamma != 0.0) g[k] += cfg.gamma * cc.grads[i][k];
        }
    }
    return out;
}

}  // namespace remix
