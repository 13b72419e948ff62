#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "remix/datamodel.hpp"
#include "remix/encoder.hpp"

namespace remix {

// Momentum-encoder embeddings for `samples`, in input order, no augmentation.
std::vector<Embedding> extract(const EncoderParams& params, std::span<const PersonSample> samples,
                               int workers = 1);

struct Probe {
    Embedding embedding;
    int identity = 0;
    int camera = 0;
};

// Per query, gallery indices by descending similarity (ties by ascending
// index). Gallery entries sharing the query's identity and camera are masked.
struct RankingResult {
    std::vector<std::vector<std::size_t>> order;
    std::vector<std::vector<double>> scores;  // aligned with order
    std::vector<std::vector<bool>> valid;     // indexed by gallery position

    std::size_t query_count() const { return order.size(); }
};

RankingResult rank_gallery(std::span<const Probe> queries, std::span<const Probe> gallery);

// Both throw NoValidPositive when a query has no same-identity gallery entry
// left after masking.
double cmc_rank_k(std::span<const Probe> queries, std::span<const Probe> gallery, std::size_t k);
double mean_ap(std::span<const Probe> queries, std::span<const Probe> gallery);

// Metrics over a precomputed ranking.
double cmc_rank_k(const RankingResult& ranking, std::span<const Probe> queries,
                  std::span<const Probe> gallery, std::size_t k);
double mean_ap(const RankingResult& ranking, std::span<const Probe> queries, std::span<const Probe> gallery);

// Average precision of a relevance sequence already in ranked order.
double average_precision(const std::vector<bool>& relevant_in_rank_order);

// Size-weighted cluster purity against hidden identities. Throws EmptyPool.
double cluster_purity(const PseudoLabeledPool& pool);

struct QueryGallerySplit {
    std::vector<std::size_t> query;    // indices into the dataset's samples
    std::vector<std::size_t> gallery;
};

// One query per (identity, camera): the lowest sample id. The rest is gallery.
QueryGallerySplit split_query_gallery(const MultiCamDataset& dataset);

struct EvalReport {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    double mAP = 0.0;
    std::size_t n_query = 0;
    std::size_t n_gallery = 0;
    std::string protocol = "cross-domain";
};

EvalReport evaluate(const EncoderParams& momentum, const MultiCamDataset& target, int workers = 1);

// mAP of uniformly random gallery orderings, averaged over `repeats`
// shuffles: the chance level a trained model has to beat.
double shuffled_ranking_baseline(std::span<const Probe> queries, std::span<const Probe> gallery, Rng& rng,
                                 int repeats = 20);

void write_report(const std::string& path, const EvalReport& report);

}  // namespace remix
