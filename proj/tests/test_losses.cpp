#include <cmath>
#include <functional>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "remix/gradcheck.hpp"
#include "remix/losses.hpp"

using namespace remix;
using fixture::code_of;

namespace {

BatchLabel multi(int id) { return {Source::Multi, id}; }
BatchLabel single(int id) { return {Source::Single, id}; }

Embedding loose(const Vec& v) { return Embedding::from_unit(v, 1.0); }

// Random batch: 2 samples per label, multi entries first.
BatchView random_view(Rng& rng, std::size_t dim, int multi_labels, int single_labels) {
    BatchView v;
    auto add = [&](BatchLabel l, std::optional<int> cam) {
        v.f.push_back(normalize(oracle::random_unit(dim, rng)));
        v.m.push_back(normalize(oracle::random_unit(dim, rng)));
        v.labels.push_back(l);
        v.cameras.push_back(cam);
    };
    for (int l = 0; l < multi_labels; ++l) {
        add(multi(l), static_cast<int>(rng.index(3)));
        add(multi(l), static_cast<int>(rng.index(3)));
    }
    for (int l = 0; l < single_labels; ++l) {
        add(single(l), std::nullopt);
        add(single(l), std::nullopt);
    }
    return v;
}

// Centroids over the momentum embeddings of the view plus a few camera
// centroids per multi label, so the camera term has positives.
CentroidBank random_bank(const BatchView& v, Rng& rng) {
    CentroidBank bank;
    for (const auto& l : v.labels) bank.set_label_centroid(l, normalize(oracle::random_unit(v.f[0].size(), rng)));
    for (const auto& l : v.labels) {
        if (l.source != Source::Multi) continue;
        for (int c = 0; c < 3; ++c) bank.set_camera_centroid(l.id, c, normalize(oracle::random_unit(v.f[0].size(), rng)));
    }
    return bank;
}

double nlog_softmax(double target, const Vec& pool) {
    double s = 0.0;
    for (double x : pool) s += std::exp(x);
    return std::log(s) - target;
}

// Direct transcriptions of the loss definitions.
double instance_ref(const BatchView& v, double tm, double ts) {
    const std::size_t n = v.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = v.labels[i].source == Source::Multi ? tm : ts;
        Vec neg;
        for (std::size_t k = 0; k < n; ++k) {
            if (v.labels[k] != v.labels[i] && v.labels[k].source == v.labels[i].source) {
                neg.push_back(oracle::dot(v.f[i].values(), v.m[k].values()) / tau);
            }
        }
        double s = 0.0;
        int p = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (v.labels[j] != v.labels[i]) continue;
            const double t = oracle::dot(v.f[i].values(), v.m[j].values()) / tau;
            Vec pool = neg;
            pool.push_back(t);
            s += nlog_softmax(t, pool);
            ++p;
        }
        total += s / p;
    }
    return total / static_cast<double>(n);
}

double augmentation_ref(const BatchView& v, double tau) {
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = oracle::dot(v.f[i].values(), v.m[i].values()) / tau;
        Vec pool{t};
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v.labels[j] != v.labels[i]) pool.push_back(oracle::dot(v.f[i].values(), v.m[j].values()) / tau);
        }
        total += nlog_softmax(t, pool);
    }
    return total / static_cast<double>(v.size());
}

double centroids_ref(const BatchView& v, const CentroidBank& bank, double tm, double ts) {
    std::set<BatchLabel> labels(v.labels.begin(), v.labels.end());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double tau = v.labels[i].source == Source::Multi ? tm : ts;
        Vec pool;
        for (const auto& l : labels) pool.push_back(oracle::dot(v.f[i].values(), bank.centroid(l).values()) / tau);
        total += nlog_softmax(oracle::dot(v.f[i].values(), bank.centroid(v.labels[i]).values()) / tau, pool);
    }
    return total / static_cast<double>(v.size());
}

double camera_ref(const BatchView& v, const CentroidBank& bank, double tau) {
    std::set<int> batch_labels;
    for (const auto& l : v.labels) {
        if (l.source == Source::Multi) batch_labels.insert(l.id);
    }
    double total = 0.0;
    int contributing = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v.labels[i].source != Source::Multi) continue;
        Vec pos, pool;
        for (const auto& [cam, c] : bank.camera_centroids(v.labels[i].id)) {
            if (cam != *v.cameras[i]) pos.push_back(oracle::dot(v.f[i].values(), c->values()) / tau);
        }
        if (pos.empty()) continue;
        pool = pos;
        for (int other : batch_labels) {
            if (other == v.labels[i].id) continue;
            for (const auto& [cam, c] : bank.camera_centroids(other)) {
                pool.push_back(oracle::dot(v.f[i].values(), c->values()) / tau);
            }
        }
        double s = 0.0;
        for (double p : pos) s += nlog_softmax(p, pool);
        total += s / static_cast<double>(pos.size());
        ++contributing;
    }
    return contributing == 0 ? 0.0 : total / contributing;
}

// Central differences of `value` with respect to every coordinate of every f_i.
void check_grads(BatchView v, const std::function<LossResult(const BatchView&)>& loss) {
    const auto analytic = loss(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec base = v.f[i].values();
        const Vec num = finite_diff_grad(
            [&](const Vec& x) {
                v.f[i] = loose(x);
                return loss(v).value;
            },
            base, 1e-5);
        v.f[i] = loose(base);
        CHECK(max_relative_error(analytic.grads[i], num, 1e-6) <= 1e-4);
    }
}

BatchView two_entry_view(const Vec& f0, const Vec& m0, const Vec& m1, BatchLabel l0, BatchLabel l1) {
    BatchView v;
    v.f = {normalize(f0), normalize(m1)};
    v.m = {normalize(m0), normalize(m1)};
    v.labels = {l0, l1};
    v.cameras = {l0.source == Source::Multi ? std::optional<int>(0) : std::nullopt,
                 l1.source == Source::Multi ? std::optional<int>(1) : std::nullopt};
    return v;
}

}  // namespace

TEST_CASE("instance loss hand value: one positive at sim 1, one negative at sim 0") {
    // Anchor 0: positive m0 (sim 1), negative m1 (sim 0).
    const auto v = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), multi(1));
    const auto r = instance_loss(v, 0.1, 0.2);
    // anchor 1 has f1 = m1: positive sim 1, negative m0 sim 0
    CHECK(r.value == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
    CHECK(std::log1p(std::exp(-10.0)) == doctest::Approx(4.5399e-5).epsilon(1e-4));
}

TEST_CASE("augmentation loss hand value") {
    const auto v = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), single(0));
    CHECK(augmentation_loss(v, 0.1).value == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
}

TEST_CASE("centroids loss hand value") {
    BatchView v;
    v.f = {normalize(Vec{1, 0})};
    v.m = {normalize(Vec{1, 0})};
    v.labels = {multi(0)};
    v.cameras = {0};
    CentroidBank bank;
    bank.set_label_centroid(multi(0), normalize(Vec{1, 0}));
    bank.set_label_centroid(multi(1), normalize(Vec{0, 1}));
    // second entry brings label 1 into the batch; its own term is identical by symmetry
    v.f.push_back(normalize(Vec{0, 1}));
    v.m.push_back(normalize(Vec{0, 1}));
    v.labels.push_back(multi(1));
    v.cameras.push_back(0);
    const double r = centroids_loss(v, bank, 0.5, 0.6).value;
    CHECK(r == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
    CHECK(r == doctest::Approx(0.12693).epsilon(1e-4));
}

TEST_CASE("camera centroids loss hand value") {
    BatchView v;
    v.f = {normalize(Vec{1, 0}), normalize(Vec{0, 1})};
    v.m = v.f;
    v.labels = {multi(0), multi(1)};
    v.cameras = {0, 0};
    CentroidBank bank;
    bank.set_camera_centroid(0, 1, normalize(Vec{1, 0}));  // positive for anchor 0
    bank.set_camera_centroid(1, 0, normalize(Vec{0, 1}));  // negative for anchor 0, own camera for anchor 1
    const double r = camera_centroids_loss(v, bank, 0.07).value;
    CHECK(r == doctest::Approx(std::log1p(std::exp(-1.0 / 0.07))).epsilon(1e-12));
    CHECK(r == doctest::Approx(6.2e-7).epsilon(0.01));
}

TEST_CASE("degenerate cases give exactly zero") {
    const auto e = normalize(Vec{0.6, 0.8});
    BatchView one;
    one.f = {e};
    one.m = {e};
    one.labels = {multi(0)};
    one.cameras = {0};
    CentroidBank bank;
    bank.set_label_centroid(multi(0), e);
    bank.set_camera_centroid(0, 0, e);

    const auto ins = instance_loss(one, 0.1, 0.2);
    CHECK(ins.value == 0.0);
    CHECK(augmentation_loss(one, 0.1).value == 0.0);
    CHECK(centroids_loss(one, bank, 0.5, 0.6).value == 0.0);
    CHECK(camera_centroids_loss(one, bank, 0.07).value == 0.0);
    for (double g : ins.grads[0]) CHECK(g == 0.0);

    // every identity under a single camera
    auto v = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), multi(1));
    v.cameras = {0, 1};
    CentroidBank cams;
    cams.set_camera_centroid(0, 0, normalize(Vec{1, 0}));
    cams.set_camera_centroid(1, 1, normalize(Vec{0, 1}));
    const auto cc = camera_centroids_loss(v, cams, 0.07);
    CHECK(cc.value == 0.0);
    for (const auto& g : cc.grads) {
        for (double x : g) CHECK(x == 0.0);
    }

    // single-camera entries never contribute to the camera term
    auto s = two_entry_view({1, 0}, {1, 0}, {0, 1}, single(0), single(1));
    CHECK(camera_centroids_loss(s, cams, 0.07).value == 0.0);

    BatchView empty;
    CHECK(instance_loss(empty, 0.1, 0.2).value == 0.0);
}

TEST_CASE("loss values match direct transcriptions on random batches") {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const auto v = random_view(rng, 8, 3, 3);
        const auto bank = random_bank(v, rng);
        CHECK(instance_loss(v, 0.1, 0.2).value == doctest::Approx(instance_ref(v, 0.1, 0.2)).epsilon(1e-12));
        CHECK(augmentation_loss(v, 0.1).value == doctest::Approx(augmentation_ref(v, 0.1)).epsilon(1e-12));
        CHECK(centroids_loss(v, bank, 0.5, 0.6).value ==
              doctest::Approx(centroids_ref(v, bank, 0.5, 0.6)).epsilon(1e-12));
        CHECK(camera_centroids_loss(v, bank, 0.07).value == doctest::Approx(camera_ref(v, bank, 0.07)).epsilon(1e-12));
        CHECK(instance_loss(v, 0.1, 0.2).value >= 0.0);
        CHECK(augmentation_loss(v, 0.1).value >= 0.0);
        CHECK(centroids_loss(v, bank, 0.5, 0.6).value >= 0.0);
        CHECK(camera_centroids_loss(v, bank, 0.07).value >= 0.0);
    }
}

TEST_CASE("cross-source negatives widen the instance pool") {
    Rng rng(12);
    const auto v = random_view(rng, 8, 2, 2);
    CHECK(instance_loss(v, 0.1, 0.2, true).value > instance_loss(v, 0.1, 0.2, false).value);
}

TEST_CASE("analytic gradients match finite differences with respect to f") {
    Rng rng(13);
    for (int t = 0; t < 5; ++t) {
        const auto v = random_view(rng, 8, 3, 3);
        const auto bank = random_bank(v, rng);
        check_grads(v, [](const BatchView& b) { return instance_loss(b, 0.1, 0.2); });
        check_grads(v, [](const BatchView& b) { return augmentation_loss(b, 0.1); });
        check_grads(v, [&](const BatchView& b) { return centroids_loss(b, bank, 0.5, 0.6); });
        check_grads(v, [&](const BatchView& b) { return camera_centroids_loss(b, bank, 0.07); });
    }
}

TEST_CASE("gradients through the encoder pass the finite-difference check") {
    const auto lines = run_gradcheck(GradcheckOptions{});
    REQUIRE(lines.size() == 4);
    for (const auto& l : lines) {
        INFO(l.loss, " ", l.max_relative_error);
        CHECK(l.pass);
        CHECK(l.max_relative_error <= 1e-4);
    }
    GradcheckOptions bad;
    bad.corrupt_gradient = true;
    bool any_fail = false;
    for (const auto& l : run_gradcheck(bad)) any_fail = any_fail || !l.pass;
    CHECK(any_fail);
}

TEST_CASE("losses depend on m and centroids only through their values") {
    Rng rng(14);
    auto v = random_view(rng, 8, 2, 2);
    auto bank = random_bank(v, rng);
    const double ins = instance_loss(v, 0.1, 0.2).value;
    const double cen = centroids_loss(v, bank, 0.5, 0.6).value;
    v.m[1] = normalize(oracle::random_unit(8, rng));
    bank.set_label_centroid(v.labels[0], normalize(oracle::random_unit(8, rng)));
    CHECK(instance_loss(v, 0.1, 0.2).value != ins);
    CHECK(centroids_loss(v, bank, 0.5, 0.6).value != cen);
    // one gradient per batch entry, taken with respect to f only
    CHECK(instance_loss(v, 0.1, 0.2).grads.size() == v.size());
}

TEST_CASE("total loss is the weighted sum of its parts") {
    Rng rng(15);
    for (int t = 0; t < 10; ++t) {
        const auto v = random_view(rng, 8, 3, 3);
        const auto bank = random_bank(v, rng);
        LossConfig cfg;
        const auto total = total_loss(v, bank, cfg);
        const auto a = instance_loss(v, 0.1, 0.2);
        const auto b = augmentation_loss(v, 0.1);
        const auto c = centroids_loss(v, bank, 0.5, 0.6);
        const auto d = camera_centroids_loss(v, bank, 0.07);
        CHECK(cfg.gamma == 0.5);
        CHECK(std::abs(total.value - (a.value + b.value + c.value + 0.5 * d.value)) <= 1e-12);
        CHECK(total.camera_centroids == d.value);
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (std::size_t k = 0; k < 8; ++k) {
                const double expect = a.grads[i][k] + b.grads[i][k] + c.grads[i][k] + 0.5 * d.grads[i][k];
                CHECK(std::abs(total.grads[i][k] - expect) <= 1e-12);
            }
        }

        cfg.gamma = 0.0;
        const auto no_cc = total_loss(v, bank, cfg);
        CHECK(no_cc.value == a.value + b.value + c.value);
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (std::size_t k = 0; k < 8; ++k) {
                CHECK(no_cc.grads[i][k] == a.grads[i][k] + b.grads[i][k] + c.grads[i][k]);
            }
        }
    }
}

TEST_CASE("a common rotation of f, m and centroids leaves the losses unchanged") {
    Rng rng(16);
    const auto v = random_view(rng, 4, 2, 2);
    const auto bank = random_bank(v, rng);
    auto rotate = [](const Embedding& e) {
        const Vec& x = e.values();
        return normalize(Vec{x[1], -x[0], x[3], -x[2]});
    };
    BatchView r = v;
    for (auto& e : r.f) e = rotate(e);
    for (auto& e : r.m) e = rotate(e);
    CentroidBank rb;
    for (const auto& l : v.labels) rb.set_label_centroid(l, rotate(bank.centroid(l)));
    CHECK(centroids_loss(r, rb, 0.5, 0.6).value == doctest::Approx(centroids_loss(v, bank, 0.5, 0.6).value).epsilon(1e-12));
    CHECK(instance_loss(r, 0.1, 0.2).value == doctest::Approx(instance_loss(v, 0.1, 0.2).value).epsilon(1e-12));
}

TEST_CASE("centroids are normalized means") {
    Rng rng(17);
    std::vector<Embedding> emb;
    std::vector<BatchLabel> labels;
    std::vector<std::optional<int>> cams;
    std::map<BatchLabel, std::vector<Vec>> by_label;
    std::map<std::pair<int, int>, std::vector<Vec>> by_cam;
    for (int i = 0; i < 30; ++i) {
        const Vec x = oracle::random_unit(6, rng);
        emb.push_back(normalize(x));
        const bool is_multi = i % 2 == 0;
        const BatchLabel l = is_multi ? multi(i % 3) : single(i % 4);
        labels.push_back(l);
        cams.push_back(is_multi ? std::optional<int>(i % 5) : std::nullopt);
        by_label[l].push_back(emb.back().values());
        if (is_multi) by_cam[{l.id, i % 5}].push_back(emb.back().values());
    }
    const auto bank = build_centroids(emb, labels, cams, 7);
    CHECK(bank.epoch == 7);
    CHECK(bank.label_count() == by_label.size());
    CHECK(bank.camera_centroid_count() == by_cam.size());
    for (const auto& [l, members] : by_label) {
        const Vec expect = oracle::centroid(members);
        for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(bank.centroid(l)[k] - expect[k]) <= 1e-12);
    }
    for (const auto& [key, members] : by_cam) {
        const Vec expect = oracle::centroid(members);
        bool found = false;
        for (const auto& [cam, c] : bank.camera_centroids(key.first)) {
            if (cam != key.second) continue;
            found = true;
            for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs((*c)[k] - expect[k]) <= 1e-12);
        }
        CHECK(found);
    }
}

TEST_CASE("centroid edge cases") {
    const auto e = normalize(Vec{0.0, 1.0, 0.0});
    const std::vector<Embedding> one{e};
    const std::vector<BatchLabel> l{multi(0)};
    const std::vector<std::optional<int>> c{0};
    CHECK(build_centroids(one, l, c).centroid(multi(0)) == e);

    const std::vector<Embedding> anti{normalize(Vec{1, 0, 0}), normalize(Vec{-1, 0, 0})};
    const std::vector<BatchLabel> l2{single(0), single(0)};
    const std::vector<std::optional<int>> c2{std::nullopt, std::nullopt};
    CHECK(code_of([&] { build_centroids(anti, l2, c2); }) == ErrorCode::ZeroVector);
    CHECK(code_of([] { build_centroids({}, {}, {}); }) == ErrorCode::EmptyLabel);

    CentroidBank bank;
    CHECK(code_of([&] { bank.centroid(single(3)); }) == ErrorCode::UnresolvedLabel);
    const auto v = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), multi(1));
    CHECK(code_of([&] { centroids_loss(v, bank, 0.5, 0.6); }) == ErrorCode::UnresolvedLabel);
}

TEST_CASE("batch view validation") {
    auto v = two_entry_view({1, 0}, {1, 0}, {0, 1}, single(0), multi(0));
    CHECK(code_of([&] { instance_loss(v, 0.1, 0.2); }) == ErrorCode::ShapeMismatch);
    auto w = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), multi(1));
    w.m.pop_back();
    CHECK(code_of([&] { augmentation_loss(w, 0.1); }) == ErrorCode::ShapeMismatch);
    auto x = two_entry_view({1, 0}, {1, 0}, {0, 1}, multi(0), multi(1));
    CHECK(code_of([&] { augmentation_loss(x, 0.0); }) == ErrorCode::InvalidConfig);
    LossConfig bad;
    bad.gamma = -1.0;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
}
