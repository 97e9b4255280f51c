#pragma once

// The four CLI commands. Each writes into a fresh run directory: output goes
// to a staging directory that is renamed into place only on success, and an
// existing non-empty output directory is never touched.

#include "config.hpp"

#include "dps/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dps::app {

struct OutputExistsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RunDir {
public:
    explicit RunDir(std::filesystem::path out);
    ~RunDir();
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;

    const std::filesystem::path& staging() const { return staging_; }
    std::filesystem::path operator/(const std::string& rel) const { return staging_ / rel; }
    void commit();

private:
    std::filesystem::path out_, staging_;
    bool committed_ = false;
};

// manifest.json: command, config hash, seed, file-format versions, outputs.
void write_manifest(const RunDir& dir, const std::string& command, std::uint64_t config_hash, std::uint64_t seed,
                    const std::vector<std::string>& outputs, const nlohmann::ordered_json& extra = {});

// checkpoints/ckpt_<it>.ckpt, train_log.csv, config.json, manifest.json
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct SampleOptions {
    std::filesystem::path checkpoint;
    std::optional<int> steps, samples;
    std::optional<double> radius;
    std::optional<std::uint64_t> seed;    // defaults to the checkpoint seed
    std::optional<std::string> target;    // must match the checkpoint when given
};

// samples.csv, samples.json, manifest.json
void cmd_sample(const SampleOptions& opts, const std::filesystem::path& out);

struct EvaluateOptions {
    std::filesystem::path samples;
    std::optional<std::filesystem::path> config;      // target and evaluate settings
    std::optional<std::string> target;                // named target
    std::optional<std::filesystem::path> checkpoint;  // needed for the score metric
    std::vector<std::string> metrics;                 // empty: all supported
    std::optional<int> k;
    std::optional<int> reference_samples;
    std::uint64_t seed = 0;
    std::optional<std::string> method;                // defaults to the sidecar's method
    std::optional<std::filesystem::path> results;     // shared results CSV to append to
};

// report.json, results.csv (unless a shared one is given), manifest.json
MetricsReport cmd_evaluate(const EvaluateOptions& opts, const std::filesystem::path& out);

struct OracleCommand {
    std::string kind;  // weight-sweep, bounds, score-residual
    std::uint64_t seed = 0;
    int pairs = 20;
    int points = 20;
};

// sweep_weights.csv + sweep_time.csv, bounds.csv, or score_residual.csv
void cmd_oracle(const OracleCommand& cmd, const std::filesystem::path& out);

}  // namespace dps::app
