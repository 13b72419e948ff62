#include "remix/pseudolabel.hpp"

#include <algorithm>
#include <deque>
#include <string>

namespace remix {

namespace {

constexpr int kUnvisited = -2;

std::vector<std::vector<std::size_t>> neighborhoods(std::span<const Embedding> points, double eps) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (1.0 - cosine(points[i], points[j]) <= eps) {
                out[i].push_back(j);
                out[j].push_back(i);
            }
        }
    }
    return out;
}

}  // namespace

std::vector<int> dbscan(std::span<const Embedding> points, double eps, int min_pts) {
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "dbscan eps must be positive");
    if (min_pts < 1) throw Error(ErrorCode::InvalidConfig, "dbscan min_pts must be >= 1");
    const auto nbrs = neighborhoods(points, eps);
    const auto min_size = static_cast<std::size_t>(min_pts);

    std::vector<int> label(points.size(), kUnvisited);
    int cluster = 0;
    std::deque<std::size_t> frontier;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (label[i] != kUnvisited) continue;
        if (nbrs[i].size() < min_size) {
            label[i] = kNoise;
            continue;
        }
        label[i] = cluster;
        frontier.assign(nbrs[i].begin(), nbrs[i].end());
        while (!frontier.empty()) {
            const auto q = frontier.front();
            frontier.pop_front();
            if (label[q] == kNoise) label[q] = cluster;  // border point
            if (label[q] != kUnvisited) continue;
            label[q] = cluster;
            if (nbrs[q].size() >= min_size) frontier.insert(frontier.end(), nbrs[q].begin(), nbrs[q].end());
        }
        ++cluster;
    }
    return label;
}

PseudoLabeledPool pseudo_label_epoch(const SingleCamCorpus& corpus, const EncoderParams& momentum,
                                     const PseudoLabelConfig& cfg, Rng& rng) {
    if (cfg.budget <= 0) throw Error(ErrorCode::InvalidConfig, "pseudo-label budget must be positive");
    if (corpus.videos.empty()) throw Error(ErrorCode::BudgetUnreachable, "single-camera corpus is empty");

    PseudoLabeledPool pool;
    std::vector<std::size_t> order(corpus.videos.size());
    std::size_t cursor = order.size();
    std::int64_t counter = 0;
    std::int64_t labeled_this_pass = 0;
    while (counter < cfg.budget) {
        if (cursor == order.size()) {
            if (pool.videos_processed > 0 && labeled_this_pass == 0) {
                throw Error(ErrorCode::BudgetUnreachable,
                            "a full pass over " + std::to_string(order.size()) + " videos labeled no images");
            }
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            cursor = 0;
            labeled_this_pass = 0;
        }
        const Video& video = corpus.videos[order[cursor++]];
        ++pool.videos_processed;

        std::vector<std::span<const double>> inputs;
        inputs.reserve(video.frames.size());
        for (const auto& f : video.frames) inputs.emplace_back(f.features);
        const auto embeddings = embed_many(momentum, inputs, cfg.workers);
        const auto assignment = dbscan(embeddings, cfg.eps, cfg.min_pts);

        int clusters_here = 0;
        for (int a : assignment) clusters_here = std::max(clusters_here, a + 1);
        const auto base = static_cast<int>(pool.clusters.size());
        for (int c = 0; c < clusters_here; ++c) {
            PseudoCluster cluster;
            cluster.pseudo_label = base + c;
            cluster.video_id = video.video_id;
            pool.clusters.push_back(std::move(cluster));
        }
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (assignment[i] == kNoise) {
                ++pool.noise_count;
                continue;
            }
            auto& cluster = pool.clusters[static_cast<std::size_t>(base + assignment[i])];
            cluster.members.push_back(PoolEntry{video.frames[i], embeddings[i]});
        }
        for (int c = 0; c < clusters_here; ++c) {
            auto& cluster = pool.clusters[static_cast<std::size_t>(base + c)];
            Vec sum(cluster.members.front().embedding.size(), 0.0);
            for (const auto& m : cluster.members) {
                for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += m.embedding[k];
            }
            cluster.centroid = normalize(sum);
        }
        const auto labeled = static_cast<std::int64_t>(video.frames.size()) -
                             std::count(assignment.begin(), assignment.end(), kNoise);
        counter += labeled;
        labeled_this_pass += labeled;
    }
    return pool;
}

}  // namespace remix
