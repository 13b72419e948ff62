#include "remix/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace remix {

using json = nlohmann::json;

namespace {

struct Field {
    std::string section;  // empty for top-level keys
    std::string key;
    std::string help;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;

    std::string path() const { return section.empty() ? key : section + "." + key; }
};

[[noreturn]] void type_error(const std::string& path, const char* expected) {
    throw Error(ErrorCode::InvalidConfig, "config key '" + path + "' expects " + expected);
}

template <typename T>
T convert(const json& j, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) type_error(path, "a boolean");
        return j.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!j.is_number_unsigned()) type_error(path, "a non-negative integer");
        return j.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) type_error(path, "an integer");
        return j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) type_error(path, "a number");
        return j.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) type_error(path, "a string");
        return j.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
        if (!j.is_array()) type_error(path, "an array of integers");
        std::vector<int> out;
        for (const auto& e : j) {
            if (!e.is_number_integer()) type_error(path, "an array of integers");
            out.push_back(e.get<int>());
        }
        return out;
    } else if constexpr (std::is_same_v<T, Activation>) {
        if (!j.is_string()) type_error(path, "an activation name");
        return activation_from_string(j.get<std::string>());
    }
}

template <typename T>
json to_json_value(const T& v) {
    if constexpr (std::is_same_v<T, Activation>) {
        return to_string(v);
    } else {
        return json(v);
    }
}

template <typename T, typename Access>
Field field(std::string section, std::string key, std::string help, Access access) {
    Field f{std::move(section), std::move(key), std::move(help), {}, {}};
    const std::string path = f.path();
    f.get = [access](const RunConfig& c) { return to_json_value<T>(access(const_cast<RunConfig&>(c))); };
    f.set = [access, path](RunConfig& c, const json& j) { access(c) = convert<T>(j, path); };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        // generator
        t.push_back(field<int>("generator", "dim", "raw feature dimension D", [](RunConfig& c) -> int& { return c.generator.dim; }));
        t.push_back(field<int>("generator", "train_identities", "labeled multi-camera identities", [](RunConfig& c) -> int& { return c.generator.train_identities; }));
        t.push_back(field<int>("generator", "train_cameras", "cameras in the labeled domain", [](RunConfig& c) -> int& { return c.generator.train_cameras; }));
        t.push_back(field<int>("generator", "images_per_camera", "images per identity per camera (labeled domain)", [](RunConfig& c) -> int& { return c.generator.images_per_camera; }));
        t.push_back(field<int>("generator", "single_identities", "identities in the single-camera corpus", [](RunConfig& c) -> int& { return c.generator.single_identities; }));
        t.push_back(field<int>("generator", "videos", "single-camera videos (identities are split across them)", [](RunConfig& c) -> int& { return c.generator.videos; }));
        t.push_back(field<int>("generator", "frames_per_identity", "frames per identity in its video", [](RunConfig& c) -> int& { return c.generator.frames_per_identity; }));
        t.push_back(field<int>("generator", "target_identities", "identities in the held-out target domain", [](RunConfig& c) -> int& { return c.generator.target_identities; }));
        t.push_back(field<int>("generator", "target_cameras", "cameras in the target domain", [](RunConfig& c) -> int& { return c.generator.target_cameras; }));
        t.push_back(field<int>("generator", "target_images_per_camera", "images per identity per camera (target domain)", [](RunConfig& c) -> int& { return c.generator.target_images_per_camera; }));
        t.push_back(field<int>("generator", "style_dims", "trailing coordinates that carry the camera offset", [](RunConfig& c) -> int& { return c.generator.style_dims; }));
        t.push_back(field<int>("generator", "train_identity_dims", "identity coordinates spanned by labeled identities; 0 = all", [](RunConfig& c) -> int& { return c.generator.train_identity_dims; }));
        t.push_back(field<double>("generator", "style_bias", "norm of each camera's additive offset", [](RunConfig& c) -> double& { return c.generator.style_bias; }));
        t.push_back(field<double>("generator", "style_mix", "scale of each camera's linear distortion", [](RunConfig& c) -> double& { return c.generator.style_mix; }));
        t.push_back(field<double>("generator", "domain_shift", "style strength multiplier for the target domain", [](RunConfig& c) -> double& { return c.generator.domain_shift; }));
        t.push_back(field<double>("generator", "sigma_cam", "per-image noise norm (labeled and target domains)", [](RunConfig& c) -> double& { return c.generator.sigma_cam; }));
        t.push_back(field<double>("generator", "sigma_frame", "per-frame noise norm (single-camera videos)", [](RunConfig& c) -> double& { return c.generator.sigma_frame; }));
        // model
        t.push_back(field<int>("model", "embedding_dim", "embedding dimension E", [](RunConfig& c) -> int& { return c.model.embedding_dim; }));
        t.push_back(field<std::vector<int>>("model", "hidden", "hidden layer widths", [](RunConfig& c) -> std::vector<int>& { return c.model.hidden; }));
        t.push_back(field<Activation>("model", "activation", "hidden activation: tanh | identity", [](RunConfig& c) -> Activation& { return c.model.activation; }));
        // train
        t.push_back(field<double>("train", "lambda", "momentum-encoder EMA coefficient", [](RunConfig& c) -> double& { return c.train.lambda; }));
        t.push_back(field<double>("train", "gamma", "camera-centroid loss weight", [](RunConfig& c) -> double& { return c.train.loss.gamma; }));
        t.push_back(field<double>("train", "tau_ins_m", "instance loss temperature, multi-camera anchors", [](RunConfig& c) -> double& { return c.train.loss.tau_ins_multi; }));
        t.push_back(field<double>("train", "tau_ins_s", "instance loss temperature, single-camera anchors", [](RunConfig& c) -> double& { return c.train.loss.tau_ins_single; }));
        t.push_back(field<double>("train", "tau_aug", "augmentation loss temperature", [](RunConfig& c) -> double& { return c.train.loss.tau_aug; }));
        t.push_back(field<double>("train", "tau_cen_m", "centroid loss temperature, multi-camera anchors", [](RunConfig& c) -> double& { return c.train.loss.tau_cen_multi; }));
        t.push_back(field<double>("train", "tau_cen_s", "centroid loss temperature, single-camera anchors", [](RunConfig& c) -> double& { return c.train.loss.tau_cen_single; }));
        t.push_back(field<double>("train", "tau_cc", "camera-centroid loss temperature", [](RunConfig& c) -> double& { return c.train.loss.tau_cc; }));
        t.push_back(field<bool>("train", "cross_source_negatives", "instance-loss negatives from both sources", [](RunConfig& c) -> bool& { return c.train.loss.cross_source_negatives; }));
        t.push_back(field<int>("train", "n_p_multi", "labels per batch, multi-camera (N^m_P)", [](RunConfig& c) -> int& { return c.train.batch.multi_labels; }));
        t.push_back(field<int>("train", "n_k_multi", "samples per label, multi-camera (N^m_K)", [](RunConfig& c) -> int& { return c.train.batch.multi_per_label; }));
        t.push_back(field<int>("train", "n_p_single", "pseudo labels per batch (N^s_P); 0 disables single-camera data", [](RunConfig& c) -> int& { return c.train.batch.single_labels; }));
        t.push_back(field<int>("train", "n_k_single", "samples per pseudo label (N^s_K)", [](RunConfig& c) -> int& { return c.train.batch.single_per_label; }));
        t.push_back(field<int>("train", "epochs", "training epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
        t.push_back(field<int>("train", "iterations", "iterations per epoch", [](RunConfig& c) -> int& { return c.train.iterations; }));
        t.push_back(field<double>("train", "lr", "Adam base learning rate", [](RunConfig& c) -> double& { return c.train.adam.base_lr; }));
        t.push_back(field<double>("train", "weight_decay", "decoupled weight decay rate", [](RunConfig& c) -> double& { return c.train.adam.weight_decay; }));
        t.push_back(field<int>("train", "warmup_epochs", "linear learning-rate warm-up epochs", [](RunConfig& c) -> int& { return c.train.adam.warmup_epochs; }));
        t.push_back(field<double>("train", "sigma_aug", "augmentation noise scale", [](RunConfig& c) -> double& { return c.train.augment.sigma; }));
        t.push_back(field<double>("train", "p_drop", "augmentation coordinate dropout probability", [](RunConfig& c) -> double& { return c.train.augment.p_drop; }));
        t.push_back(field<double>("train", "dbscan_eps", "DBSCAN cosine-distance threshold", [](RunConfig& c) -> double& { return c.train.dbscan_eps; }));
        t.push_back(field<int>("train", "dbscan_min_pts", "DBSCAN core-point neighbor count (self included)", [](RunConfig& c) -> int& { return c.train.dbscan_min_pts; }));
        t.push_back(field<bool>("train", "use_single_cam", "train on pseudo-labeled single-camera data", [](RunConfig& c) -> bool& { return c.train.use_single_cam; }));
        t.push_back(field<std::int64_t>("train", "pseudo_label_budget", "images to pseudo-label per epoch; 0 = N^s_P*N^s_K*iterations", [](RunConfig& c) -> std::int64_t& { return c.train.pseudo_label_budget; }));
        t.push_back(field<int>("train", "checkpoint_every", "epochs between checkpoints; 0 = final only", [](RunConfig& c) -> int& { return c.train.checkpoint_every; }));
        // eval
        t.push_back(field<std::string>("eval", "split", "query/gallery split rule (first-per-camera)", [](RunConfig& c) -> std::string& { return c.eval.split; }));
        t.push_back(field<std::string>("eval", "report", "evaluation report path", [](RunConfig& c) -> std::string& { return c.eval.report; }));
        // io
        t.push_back(field<std::string>("io", "data_dir", "directory of multi/single/target dataset files", [](RunConfig& c) -> std::string& { return c.io.data_dir; }));
        t.push_back(field<std::string>("io", "checkpoint", "checkpoint path", [](RunConfig& c) -> std::string& { return c.io.checkpoint; }));
        t.push_back(field<std::string>("io", "metrics", "per-epoch metrics log path", [](RunConfig& c) -> std::string& { return c.io.metrics; }));
        t.push_back(field<int>("io", "workers", "embedding worker threads", [](RunConfig& c) -> int& { return c.io.workers; }));
        t.push_back(field<std::uint64_t>("", "seed", "root random seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
        return t;
    }();
    return table;
}

const Field& find_field(const std::string& path) {
    for (const auto& f : fields()) {
        if (f.path() == path) return f;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown config key '" + path + "'");
}

bool is_section(const std::string& name) {
    for (const auto& f : fields()) {
        if (f.section == name) return true;
    }
    return false;
}

}  // namespace

void RunConfig::validate() const {
    generator.validate();
    train.validate();
    if (model.embedding_dim <= 0) throw Error(ErrorCode::InvalidConfig, "model.embedding_dim must be positive");
    for (int h : model.hidden) {
        if (h <= 0) throw Error(ErrorCode::InvalidConfig, "model.hidden widths must be positive");
    }
    if (eval.split != "first-per-camera") {
        throw Error(ErrorCode::InvalidConfig, "eval.split must be 'first-per-camera'");
    }
    if (io.workers < 1) throw Error(ErrorCode::InvalidConfig, "io.workers must be >= 1");
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    RunConfig cfg;
    for (const auto& [name, value] : j.items()) {
        if (is_section(name)) {
            if (!value.is_object()) throw Error(ErrorCode::InvalidConfig, "section '" + name + "' must be an object");
            for (const auto& [key, v] : value.items()) find_field(name + "." + key).set(cfg, v);
        } else {
            find_field(name).set(cfg, value);
        }
    }
    cfg.train.workers = cfg.io.workers;
    cfg.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& f : fields()) {
        if (f.section.empty()) {
            j[f.key] = f.get(cfg);
        } else {
            j[f.section][f.key] = f.get(cfg);
        }
    }
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(ErrorCode::InvalidConfig, "override '" + std::string(assignment) + "' is not key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    find_field(key).set(cfg, value);
    cfg.train.workers = cfg.io.workers;
    cfg.validate();
}

std::string config_help() {
    const RunConfig defaults;
    std::ostringstream out;
    for (const auto& f : fields()) {
        out << "  " << f.path() << " = " << f.get(defaults).dump() << "\n      " << f.help << '\n';
    }
    return out.str();
}

}  // namespace remix
