#include "remix/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace remix {

using json = nlohmann::json;

std::string_view to_string(Source source) {
    return source == Source::Multi ? "multi" : "single";
}

MultiCamDataset MultiCamDataset::build(std::vector<PersonSample> samples) {
    MultiCamDataset ds;
    int max_label = -1;
    int max_camera = -1;
    std::size_t dim = samples.empty() ? 0 : samples.front().features.size();
    for (const auto& s : samples) {
        if (s.source != Source::Multi || !s.identity || !s.camera) {
            throw Error(ErrorCode::InvalidConfig,
                        "sample " + std::to_string(s.sample_id) + " lacks identity or camera");
        }
        if (*s.identity < 0 || *s.camera < 0) {
            throw Error(ErrorCode::InvalidConfig, "negative label or camera id");
        }
        if (s.features.size() != dim) throw Error(ErrorCode::DimensionMismatch, "mixed feature dimensions");
        max_label = std::max(max_label, *s.identity);
        max_camera = std::max(max_camera, *s.camera);
    }
    ds.num_identities_ = max_label + 1;
    ds.num_cameras_ = max_camera + 1;
    ds.by_label_.assign(static_cast<std::size_t>(ds.num_identities_), {});
    std::vector<bool> camera_seen(static_cast<std::size_t>(ds.num_cameras_), false);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ds.by_label_[static_cast<std::size_t>(*samples[i].identity)].push_back(i);
        camera_seen[static_cast<std::size_t>(*samples[i].camera)] = true;
    }
    for (int y = 0; y < ds.num_identities_; ++y) {
        if (ds.by_label_[static_cast<std::size_t>(y)].size() < 2) {
            throw Error(ErrorCode::InvalidConfig,
                        "identity " + std::to_string(y) + " has fewer than 2 samples");
        }
    }
    if (std::find(camera_seen.begin(), camera_seen.end(), false) != camera_seen.end()) {
        throw Error(ErrorCode::InvalidConfig, "camera ids are not dense");
    }
    ds.samples_ = std::move(samples);
    return ds;
}

std::size_t SingleCamCorpus::frame_count() const {
    std::size_t n = 0;
    for (const auto& v : videos) n += v.frames.size();
    return n;
}

std::size_t SingleCamCorpus::dim() const {
    for (const auto& v : videos) {
        if (!v.frames.empty()) return v.frames.front().features.size();
    }
    return 0;
}

SingleCamCorpus SingleCamCorpus::build(std::vector<PersonSample> samples) {
    SingleCamCorpus corpus;
    std::map<int, std::size_t> slot;
    std::map<int, int> home_video;
    for (auto& s : samples) {
        if (s.source != Source::Single || !s.video_id || s.camera) {
            throw Error(ErrorCode::InvalidConfig,
                        "sample " + std::to_string(s.sample_id) + " is not a single-camera frame");
        }
        const int vid = *s.video_id;
        auto [home, fresh] = home_video.try_emplace(s.hidden_identity, vid);
        if (!fresh && home->second != vid) {
            throw Error(ErrorCode::InvalidConfig, "hidden identity appears in two videos");
        }
        auto it = slot.find(vid);
        if (it == slot.end()) {
            it = slot.emplace(vid, corpus.videos.size()).first;
            corpus.videos.push_back(Video{vid, {}});
        }
        corpus.videos[it->second].frames.push_back(std::move(s));
    }
    return corpus;
}

std::vector<PersonSample> flatten(const SingleCamCorpus& corpus) {
    std::vector<PersonSample> out;
    out.reserve(corpus.frame_count());
    for (const auto& v : corpus.videos) out.insert(out.end(), v.frames.begin(), v.frames.end());
    return out;
}

void GeneratorConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be positive");
    };
    positive(dim, "dim");
    positive(train_identities, "train_identities");
    positive(train_cameras, "train_cameras");
    positive(images_per_camera, "images_per_camera");
    positive(single_identities, "single_identities");
    positive(videos, "videos");
    positive(frames_per_identity, "frames_per_identity");
    positive(target_identities, "target_identities");
    positive(target_cameras, "target_cameras");
    positive(target_images_per_camera, "target_images_per_camera");
    if (train_cameras * images_per_camera < 2 || target_cameras * target_images_per_camera < 2) {
        throw Error(ErrorCode::InvalidConfig, "every identity needs at least 2 images");
    }
    if (videos > single_identities) {
        throw Error(ErrorCode::InvalidConfig, "more videos than single-camera identities");
    }
    if (style_dims < 0 || style_dims >= dim) {
        throw Error(ErrorCode::InvalidConfig, "style_dims must lie in [0, dim)");
    }
    if (train_identity_dims < 0 || train_identity_dims > dim - style_dims) {
        throw Error(ErrorCode::InvalidConfig, "train_identity_dims must lie in [0, dim - style_dims]");
    }
    for (double s : {style_bias, style_mix, domain_shift, sigma_cam, sigma_frame}) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw Error(ErrorCode::InvalidConfig, "noise and style scales must be finite and >= 0");
        }
    }
}

namespace {

// x -> x + mix * G x + b, G with N(0, 1/dim) entries, b confined to the
// trailing style coordinates with norm `bias`.
struct StyleMap {
    std::vector<Vec> mix;  // row-major, dim x dim
    Vec offset;

    static StyleMap draw(const GeneratorConfig& cfg, double strength, Rng& rng) {
        const auto d = static_cast<std::size_t>(cfg.dim);
        StyleMap m;
        m.mix.assign(d, Vec(d, 0.0));
        const double g = cfg.style_mix * strength / std::sqrt(static_cast<double>(d));
        for (auto& row : m.mix) {
            for (auto& x : row) x = g * rng.normal();
        }
        m.offset.assign(d, 0.0);
        const auto first = d - static_cast<std::size_t>(cfg.style_dims);
        if (cfg.style_dims > 0) {
            Vec dir(static_cast<std::size_t>(cfg.style_dims));
            for (auto& x : dir) x = rng.normal();
            const double n = norm(dir);
            for (std::size_t k = 0; k < dir.size(); ++k) {
                m.offset[first + k] = cfg.style_bias * strength * dir[k] / n;
            }
        }
        return m;
    }

    Vec apply(const Vec& x) const {
        Vec out = x;
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += dot(mix[r], x) + offset[r];
        return out;
    }
};

// Identity prototypes live in the leading `span` coordinates (at most
// dim - style_dims).
Vec prototype(const GeneratorConfig& cfg, Rng& rng, int span = 0) {
    if (span <= 0) span = cfg.dim - cfg.style_dims;
    Vec v(static_cast<std::size_t>(cfg.dim), 0.0);
    for (int k = 0; k < span; ++k) v[static_cast<std::size_t>(k)] = rng.normal();
    return normalize(v).values();
}

// People sharing one video sit on a regular simplex in a random subspace of
// the identity coordinates (pairwise cosine -1/(n-1)), while it fits.
std::vector<Vec> video_prototypes(const GeneratorConfig& cfg, int count, Rng& rng) {
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) out.push_back(prototype(cfg, rng));
    if (count < 2 || count > cfg.dim - cfg.style_dims) return out;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            const double c = dot(out[k], out[i]);
            for (std::size_t t = 0; t < out[i].size(); ++t) out[i][t] -= c * out[k][t];
        }
        out[i] = normalize(out[i]).values();
    }
    Vec mean(out[0].size(), 0.0);
    for (const auto& v : out) {
        for (std::size_t t = 0; t < v.size(); ++t) mean[t] += v[t] / count;
    }
    for (auto& v : out) {
        for (std::size_t t = 0; t < v.size(); ++t) v[t] -= mean[t];
        v = normalize(v).values();
    }
    return out;
}

Vec observe(const StyleMap& style, const Vec& prototype, double sigma, Rng& rng) {
    Vec x = style.apply(prototype);
    const double s = sigma / std::sqrt(static_cast<double>(x.size()));
    for (auto& v : x) v += s * rng.normal();
    return normalize(x).values();
}

std::vector<PersonSample> labeled_domain(const GeneratorConfig& cfg, int identities, int cameras,
                                         int per_camera, double strength, int hidden_base, int span,
                                         std::int64_t& next_id, Rng& rng) {
    std::vector<StyleMap> styles;
    for (int c = 0; c < cameras; ++c) styles.push_back(StyleMap::draw(cfg, strength, rng));
    std::vector<PersonSample> out;
    for (int y = 0; y < identities; ++y) {
        const Vec proto = prototype(cfg, rng, span);
        for (int c = 0; c < cameras; ++c) {
            for (int k = 0; k < per_camera; ++k) {
                PersonSample s;
                s.sample_id = next_id++;
                s.features = observe(styles[static_cast<std::size_t>(c)], proto, cfg.sigma_cam, rng);
                s.identity = y;
                s.camera = c;
                s.source = Source::Multi;
                s.hidden_identity = hidden_base + y;
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

}  // namespace

SyntheticDomains synth_generate(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Rng root = Rng(seed).substream("generator");
    std::int64_t next_id = 0;

    Rng train_rng = root.substream("train");
    auto train = labeled_domain(cfg, cfg.train_identities, cfg.train_cameras, cfg.images_per_camera,
                                1.0, 0, cfg.train_identity_dims, next_id, train_rng);

    Rng single_rng = root.substream("single");
    const int single_base = cfg.train_identities;
    std::vector<StyleMap> video_styles;
    std::vector<std::vector<Vec>> video_people;
    for (int v = 0; v < cfg.videos; ++v) {
        video_styles.push_back(StyleMap::draw(cfg, 1.0, single_rng));
        const int people = cfg.single_identities / cfg.videos + (v < cfg.single_identities % cfg.videos ? 1 : 0);
        video_people.push_back(video_prototypes(cfg, people, single_rng));
    }
    std::vector<std::vector<PersonSample>> frames(static_cast<std::size_t>(cfg.videos));
    for (int i = 0; i < cfg.single_identities; ++i) {
        const int v = i % cfg.videos;
        const Vec& proto = video_people[static_cast<std::size_t>(v)][static_cast<std::size_t>(i / cfg.videos)];
        for (int k = 0; k < cfg.frames_per_identity; ++k) {
            PersonSample s;
            s.features = observe(video_styles[static_cast<std::size_t>(v)], proto, cfg.sigma_frame, single_rng);
            s.source = Source::Single;
            s.video_id = v;
            s.hidden_identity = single_base + i;
            frames[static_cast<std::size_t>(v)].push_back(std::move(s));
        }
    }
    SingleCamCorpus corpus;
    for (int v = 0; v < cfg.videos; ++v) {
        auto& fs = frames[static_cast<std::size_t>(v)];
        single_rng.shuffle(fs);
        for (auto& s : fs) s.sample_id = next_id++;
        corpus.videos.push_back(Video{v, std::move(fs)});
    }

    Rng target_rng = root.substream("target");
    auto target = labeled_domain(cfg, cfg.target_identities, cfg.target_cameras,
                                 cfg.target_images_per_camera, cfg.domain_shift,
                                 single_base + cfg.single_identities, 0, next_id, target_rng);

    return SyntheticDomains{MultiCamDataset::build(std::move(train)), std::move(corpus),
                            MultiCamDataset::build(std::move(target))};
}

Vec augment(std::span<const double> features, const AugmentConfig& cfg, Rng& rng) {
    Vec out(features.begin(), features.end());
    for (auto& x : out) {
        if (cfg.sigma > 0.0) x += cfg.sigma * rng.normal();
        if (cfg.p_drop > 0.0 && rng.bernoulli(cfg.p_drop)) x = 0.0;
    }
    return out;
}

std::size_t PseudoLabeledPool::assigned_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.members.size();
    return n;
}

namespace {

// Distinct cameras first (random order), then the label's remaining samples,
// then sampling with replacement if the label has fewer than k samples.
std::vector<std::size_t> camera_diverse_pick(const MultiCamDataset& ds, int label, int k, Rng& rng) {
    const auto& members = ds.members(label);
    std::map<int, std::vector<std::size_t>> by_camera;
    for (auto idx : members) by_camera[*ds.samples()[idx].camera].push_back(idx);
    std::vector<int> cameras;
    for (const auto& [cam, _] : by_camera) cameras.push_back(cam);
    rng.shuffle(cameras);

    std::vector<std::size_t> picked;
    std::set<std::size_t> used;
    for (int cam : cameras) {
        if (static_cast<int>(picked.size()) == k) break;
        const auto& pool = by_camera[cam];
        const auto idx = pool[rng.index(pool.size())];
        picked.push_back(idx);
        used.insert(idx);
    }
    std::vector<std::size_t> rest;
    for (auto idx : members) {
        if (!used.contains(idx)) rest.push_back(idx);
    }
    rng.shuffle(rest);
    for (auto idx : rest) {
        if (static_cast<int>(picked.size()) == k) break;
        picked.push_back(idx);
    }
    while (static_cast<int>(picked.size()) < k) picked.push_back(members[rng.index(members.size())]);
    return picked;
}

std::vector<int> choose_labels(int available, int wanted, Rng& rng) {
    std::vector<int> all(static_cast<std::size_t>(available));
    for (int i = 0; i < available; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(wanted));
    return all;
}

}  // namespace

MiniBatch compose_batch(const MultiCamDataset& multi, const PseudoLabeledPool& pool,
                        const BatchSizes& sizes, Rng& rng) {
    if (sizes.multi_labels < 0 || sizes.single_labels < 0 || sizes.multi_per_label < 1 ||
        sizes.single_per_label < 1) {
        throw Error(ErrorCode::InvalidConfig, "batch sizes must be non-negative with K >= 1");
    }
    if (multi.num_identities() < sizes.multi_labels) {
        throw Error(ErrorCode::InsufficientLabels,
                    "need " + std::to_string(sizes.multi_labels) + " multi-camera labels, have " +
                        std::to_string(multi.num_identities()));
    }
    if (static_cast<int>(pool.clusters.size()) < sizes.single_labels) {
        throw Error(ErrorCode::InsufficientLabels,
                    "need " + std::to_string(sizes.single_labels) + " pseudo labels, have " +
                        std::to_string(pool.clusters.size()));
    }

    MiniBatch batch;
    batch.multi.reserve(static_cast<std::size_t>(sizes.multi_size()));
    for (int label : choose_labels(multi.num_identities(), sizes.multi_labels, rng)) {
        for (auto idx : camera_diverse_pick(multi, label, sizes.multi_per_label, rng)) {
            const auto& s = multi.samples()[idx];
            batch.multi.push_back(BatchItem{&s, BatchLabel{Source::Multi, label}, s.camera});
        }
    }

    batch.single.reserve(static_cast<std::size_t>(sizes.single_size()));
    for (int label : choose_labels(static_cast<int>(pool.clusters.size()), sizes.single_labels, rng)) {
        const auto& members = pool.clusters[static_cast<std::size_t>(label)].members;
        if (members.empty()) throw Error(ErrorCode::InsufficientLabels, "empty pseudo-label cluster");
        std::vector<std::size_t> order(members.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (int k = 0; k < sizes.single_per_label; ++k) {
            const auto pick = static_cast<std::size_t>(k) < order.size()
                                  ? order[static_cast<std::size_t>(k)]
                                  : rng.index(members.size());
            batch.single.push_back(
                BatchItem{&members[pick].sample, BatchLabel{Source::Single, label}, std::nullopt});
        }
    }
    return batch;
}

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<T>();
}

}  // namespace

void write_dataset(const std::filesystem::path& path, std::size_t dim,
                   const std::vector<PersonSample>& samples) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << json{{"format", "remix-ds"}, {"version", 1}, {"dim", dim}}.dump() << '\n';
    for (const auto& s : samples) {
        if (s.features.size() != dim) throw Error(ErrorCode::DimensionMismatch, "sample dimension");
        json rec = {
            {"sample_id", s.sample_id},
            {"features", s.features},
            {"identity", optional_json(s.identity)},
            {"camera", optional_json(s.camera)},
            {"video_id", optional_json(s.video_id)},
            {"source", to_string(s.source)},
            {"hidden_identity", s.hidden_identity},
        };
        out << rec.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

DatasetFile read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open dataset " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "empty dataset file " + path.string());
    DatasetFile file;
    try {
        const auto header = json::parse(line);
        if (header.at("format") != "remix-ds") {
            throw Error(ErrorCode::VersionMismatch, "not a remix-ds file: " + path.string());
        }
        if (header.at("version") != 1) {
            throw Error(ErrorCode::VersionMismatch, "unsupported remix-ds version");
        }
        file.dim = header.at("dim").get<std::size_t>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto rec = json::parse(line);
            PersonSample s;
            s.sample_id = rec.at("sample_id").get<std::int64_t>();
            s.features = rec.at("features").get<Vec>();
            s.identity = optional_from<int>(rec.at("identity"));
            s.camera = optional_from<int>(rec.at("camera"));
            s.video_id = optional_from<int>(rec.at("video_id"));
            const auto src = rec.at("source").get<std::string>();
            if (src != "multi" && src != "single") {
                throw Error(ErrorCode::IoError, "unknown source '" + src + "'");
            }
            s.source = src == "multi" ? Source::Multi : Source::Single;
            s.hidden_identity = rec.at("hidden_identity").get<int>();
            if (s.features.size() != file.dim) {
                throw Error(ErrorCode::DimensionMismatch,
                            "sample " + std::to_string(s.sample_id) + " has wrong dimension");
            }
            file.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
    }
    return file;
}

}  // namespace remix
