#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "remix/datamodel.hpp"
#include "remix/error.hpp"

namespace fixture {

template <typename Fn>
remix::ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const remix::Error& e) {
        return e.code();
    }
    FAIL("expected remix::Error");
    return remix::ErrorCode::IoError;
}

inline remix::PersonSample multi_sample(std::int64_t id, int identity, int camera, remix::Vec features) {
    remix::PersonSample s;
    s.sample_id = id;
    s.features = std::move(features);
    s.identity = identity;
    s.camera = camera;
    s.source = remix::Source::Multi;
    s.hidden_identity = identity;
    return s;
}

inline remix::PersonSample single_sample(std::int64_t id, int video, int hidden, remix::Vec features) {
    remix::PersonSample s;
    s.sample_id = id;
    s.features = std::move(features);
    s.source = remix::Source::Single;
    s.video_id = video;
    s.hidden_identity = hidden;
    return s;
}

// A pool of `clusters` pseudo labels with the given sizes; embeddings are
// arbitrary unit vectors.
inline remix::PseudoLabeledPool pool_with_sizes(const std::vector<int>& sizes) {
    remix::PseudoLabeledPool pool;
    std::int64_t next = 1000;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        remix::PseudoCluster cl;
        cl.pseudo_label = static_cast<int>(c);
        cl.video_id = static_cast<int>(c);
        for (int k = 0; k < sizes[c]; ++k) {
            cl.members.push_back(remix::PoolEntry{
                single_sample(next++, static_cast<int>(c), static_cast<int>(c), {1.0, 0.0}),
                remix::normalize(remix::Vec{1.0, 0.0})});
        }
        cl.centroid = remix::normalize(remix::Vec{1.0, 0.0});
        pool.clusters.push_back(std::move(cl));
    }
    return pool;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("remix_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace fixture
