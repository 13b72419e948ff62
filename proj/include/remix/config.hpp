#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "remix/datamodel.hpp"
#include "remix/trainer.hpp"

namespace remix {

struct EvalConfig {
    std::string split = "first-per-camera";
    std::string report = "run/report.json";
};

struct IoConfig {
    std::string data_dir = "data";
    std::string checkpoint = "run/checkpoint.json";
    std::string metrics = "run/metrics.jsonl";
    int workers = 1;

    std::filesystem::path multi_path() const { return std::filesystem::path(data_dir) / "multi.jsonl"; }
    std::filesystem::path single_path() const { return std::filesystem::path(data_dir) / "single.jsonl"; }
    std::filesystem::path target_path() const { return std::filesystem::path(data_dir) / "target.jsonl"; }
};

struct RunConfig {
    GeneratorConfig generator;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    IoConfig io;
    std::uint64_t seed = 0;

    void validate() const;
};

// Strict: unknown sections or keys and wrongly typed values throw
// InvalidConfig. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::filesystem::path& path);

// Applies "dotted.key=value". The value is parsed as JSON when possible and
// taken as a bare string otherwise.
void apply_override(RunConfig& cfg, std::string_view assignment);

// One line per key: name, default, description.
std::string config_help();

}  // namespace remix
