#include "remix/evalkit.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

namespace remix {

std::vector<Embedding> extract(const EncoderParams& params, std::span<const PersonSample> samples,
                               int workers) {
    std::vector<std::span<const double>> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples) inputs.emplace_back(s.features);
    return embed_many(params, inputs, workers);
}

RankingResult rank_gallery(std::span<const Probe> queries, std::span<const Probe> gallery) {
    RankingResult out;
    out.order.reserve(queries.size());
    for (const auto& q : queries) {
        std::vector<double> sims(gallery.size());
        std::vector<bool> valid(gallery.size());
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            sims[g] = cosine(q.embedding, gallery[g].embedding);
            valid[g] = !(gallery[g].identity == q.identity && gallery[g].camera == q.camera);
        }
        std::vector<std::size_t> order(gallery.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
        std::vector<double> scores(order.size());
        for (std::size_t r = 0; r < order.size(); ++r) scores[r] = sims[order[r]];
        out.order.push_back(std::move(order));
        out.scores.push_back(std::move(scores));
        out.valid.push_back(std::move(valid));
    }
    return out;
}

namespace {

// Relevance of the valid gallery entries of query q in ranked order.
std::vector<bool> relevance(const RankingResult& ranking, std::size_t q, std::span<const Probe> queries,
                            std::span<const Probe> gallery) {
    std::vector<bool> rel;
    bool any = false;
    for (auto g : ranking.order[q]) {
        if (!ranking.valid[q][g]) continue;
        const bool hit = gallery[g].identity == queries[q].identity;
        any = any || hit;
        rel.push_back(hit);
    }
    if (!any) {
        throw Error(ErrorCode::NoValidPositive,
                    "query " + std::to_string(q) + " has no valid positive in the gallery");
    }
    return rel;
}

}  // namespace

double average_precision(const std::vector<bool>& relevant_in_rank_order) {
    double hits = 0.0;
    double acc = 0.0;
    for (std::size_t r = 0; r < relevant_in_rank_order.size(); ++r) {
        if (!relevant_in_rank_order[r]) continue;
        hits += 1.0;
        acc += hits / static_cast<double>(r + 1);
    }
    if (hits == 0.0) throw Error(ErrorCode::NoValidPositive, "no relevant entry in ranking");
    return acc / hits;
}

double cmc_rank_k(const RankingResult& ranking, std::span<const Probe> queries,
                  std::span<const Probe> gallery, std::size_t k) {
    if (queries.empty()) return 0.0;
    double matched = 0.0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto rel = relevance(ranking, q, queries, gallery);
        const auto top = std::min(k, rel.size());
        if (std::find(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(top), true) !=
            rel.begin() + static_cast<std::ptrdiff_t>(top)) {
            matched += 1.0;
        }
    }
    return matched / static_cast<double>(queries.size());
}

double mean_ap(const RankingResult& ranking, std::span<const Probe> queries, std::span<const Probe> gallery) {
    if (queries.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        acc += average_precision(relevance(ranking, q, queries, gallery));
    }
    return acc / static_cast<double>(queries.size());
}

double cmc_rank_k(std::span<const Probe> queries, std::span<const Probe> gallery, std::size_t k) {
    return cmc_rank_k(rank_gallery(queries, gallery), queries, gallery, k);
}

double mean_ap(std::span<const Probe> queries, std::span<const Probe> gallery) {
    return mean_ap(rank_gallery(queries, gallery), queries, gallery);
}

double cluster_purity(const PseudoLabeledPool& pool) {
    std::size_t total = 0;
    std::size_t majority = 0;
    for (const auto& cluster : pool.clusters) {
        std::map<int, std::size_t> counts;
        for (const auto& m : cluster.members) ++counts[m.sample.hidden_identity];
        std::size_t best = 0;
        for (const auto& [_, c] : counts) best = std::max(best, c);
        majority += best;
        total += cluster.members.size();
    }
    if (total == 0) throw Error(ErrorCode::EmptyPool, "cluster purity of an empty pool");
    return static_cast<double>(majority) / static_cast<double>(total);
}

QueryGallerySplit split_query_gallery(const MultiCamDataset& dataset) {
    const auto& samples = dataset.samples();
    std::map<std::pair<int, int>, std::size_t> first;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::pair<int, int> key{*samples[i].identity, *samples[i].camera};
        auto [it, fresh] = first.try_emplace(key, i);
        if (!fresh && samples[i].sample_id < samples[it->second].sample_id) it->second = i;
    }
    std::vector<bool> is_query(samples.size(), false);
    for (const auto& [_, idx] : first) is_query[idx] = true;
    QueryGallerySplit split;
    for (std::size_t i = 0; i < samples.size(); ++i) (is_query[i] ? split.query : split.gallery).push_back(i);
    return split;
}

EvalReport evaluate(const EncoderParams& momentum, const MultiCamDataset& target, int workers) {
    const auto split = split_query_gallery(target);
    const auto embeddings = extract(momentum, target.samples(), workers);
    auto probes = [&](const std::vector<std::size_t>& idx) {
        std::vector<Probe> out;
        out.reserve(idx.size());
        for (auto i : idx) {
            const auto& s = target.samples()[i];
            out.push_back(Probe{embeddings[i], *s.identity, *s.camera});
        }
        return out;
    };
    const auto queries = probes(split.query);
    const auto gallery = probes(split.gallery);
    const auto ranking = rank_gallery(queries, gallery);

    EvalReport report;
    report.rank1 = cmc_rank_k(ranking, queries, gallery, 1);
    report.rank5 = cmc_rank_k(ranking, queries, gallery, 5);
    report.rank10 = cmc_rank_k(ranking, queries, gallery, 10);
    report.mAP = mean_ap(ranking, queries, gallery);
    report.n_query = queries.size();
    report.n_gallery = gallery.size();
    return report;
}

double shuffled_ranking_baseline(std::span<const Probe> queries, std::span<const Probe> gallery, Rng& rng,
                                 int repeats) {
    if (queries.empty() || repeats <= 0) return 0.0;
    double acc = 0.0;
    for (int r = 0; r < repeats; ++r) {
        RankingResult ranking;
        for (const auto& q : queries) {
            std::vector<std::size_t> order(gallery.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            std::vector<bool> valid(gallery.size());
            for (std::size_t g = 0; g < gallery.size(); ++g) {
                valid[g] = !(gallery[g].identity == q.identity && gallery[g].camera == q.camera);
            }
            ranking.order.push_back(std::move(order));
            ranking.scores.emplace_back(gallery.size(), 0.0);
            ranking.valid.push_back(std::move(valid));
        }
        acc += mean_ap(ranking, queries, gallery);
    }
    return acc / static_cast<double>(repeats);
}

void write_report(const std::string& path, const EvalReport& report) {
    nlohmann::json j = {
        {"rank1", report.rank1},     {"rank5", report.rank5},         {"rank10", report.rank10},
        {"mAP", report.mAP},         {"n_query", report.n_query},     {"n_gallery", report.n_gallery},
        {"protocol", report.protocol},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write report to " + path);
    out << j.dump(2) << '\n';
}

}  // namespace remix
