#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "remix/datamodel.hpp"
#include "remix/encoder.hpp"

namespace remix {

inline constexpr int kNoise = -1;

// Density clustering under cosine distance 1 - <a, b>. A point is core when
// at least min_pts points (itself included) lie within eps, inclusive.
// Points are scanned in index order: clusters are numbered by their
// lowest-index core point, and a border point joins the first cluster that
// reaches it. Returns a cluster id per point or kNoise.
std::vector<int> dbscan(std::span<const Embedding> points, double eps, int min_pts);

struct PseudoLabelConfig {
    double eps = 0.8;
    int min_pts = 4;
    // Number of non-noise images to label per epoch.
    std::int64_t budget = 32 * 400;
    int workers = 1;
};

// Draws videos uniformly without replacement (reshuffling after a full
// pass), clusters each one with its momentum embeddings, discards noise, and
// assigns fresh pseudo labels until `budget` images are labeled. Throws
// BudgetUnreachable when a full pass over the corpus labels nothing.
PseudoLabeledPool pseudo_label_epoch(const SingleCamCorpus& corpus, const EncoderParams& momentum,
                                     const PseudoLabelConfig& cfg, Rng& rng);

}  // namespace remix
