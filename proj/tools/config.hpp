#pragma once

// Experiment configuration: a JSON document with per-target defaults for
// every omitted field. Unknown keys and type errors are reported with the
// path of the offending field, e.g. "train.iterations: expected an integer".
//
//   {
//     "target": "9gaussians" | {"name": "mog", "weights": [...],
//                                "means": [[...], ...], "variance": 1.0},
//     "mode": "logdensity" | "score",
//     "seed": 0,
//     "workers": 1,
//     "train": {"iterations", "learning_rate", "clip_norm", "lambda",
//               "batch_size", "hutchinson", "checkpoint_every"},
//     "lmc": {"step", "iterations", "batch_size", "refresh_interval"},
//     "architecture": {"hidden", "embedding_dim", "frequency_base", "time_scale"},
//     "sampler": {"steps", "samples", "radius"},
//     "evaluate": {"metrics": ["kl", "mixing", "score"], "k", "reference_samples",
//                  "score_time", "score_samples"}
//   }

#include "dps/sampler.hpp"
#include "dps/targets.hpp"
#include "dps/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dps::app {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TargetSpec {
    std::string name;
    std::optional<GaussianMixture> mixture;  // set for inline mixtures

    TargetDistribution build() const;
    nlohmann::ordered_json to_json() const;
};

// Parses "9gaussians"-style names or an inline mixture object; `path` prefixes errors.
TargetSpec parse_target(const nlohmann::json& j, const std::string& path = "target");

struct EvaluateSettings {
    std::vector<std::string> metrics;  // empty: every metric the target supports
    int k = 5;
    int reference_samples = 5000;
    double score_time = 0.5;
    int score_samples = 1000;
};

struct ExperimentConfig {
    TargetSpec target;
    std::string mode = "logdensity";
    std::uint64_t seed = 0;
    int workers = 1;
    TrainConfig train;
    SamplerConfig sampler;
    EvaluateSettings evaluate;

    // Fully resolved configuration, defaults included.
    nlohmann::ordered_json to_json() const;
    // FNV-1a of the compact resolved JSON.
    std::uint64_t hash() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string hex(std::uint64_t v);

}  // namespace dps::app
