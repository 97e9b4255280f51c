#pragma once

// Reverse-time sampling with an exponential-integrator step and a score
// truncated to a closed ball, plus the long-chain Langevin baseline.
//
// The reverse clock runs forward over [T_min, T_max]; at reverse time t the
// score is evaluated at model time 1 - t.

#include "dps/model.hpp"
#include "dps/targets.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace dps {

struct SamplerConfig {
    int steps = 1000;
    int samples = 1000;
    double radius = 20.0;
    std::uint64_t seed = 0;
    double t_min = 1e-3;
    double t_max = 0.999;

    double step_size() const { return (t_max - t_min) / steps; }
    void validate() const;
    // Truncation radius per target; unknown names get 20.
    static SamplerConfig defaults_for(const std::string& target);
};

struct SampleSet {
    Eigen::MatrixXd samples;  // M x d
    std::string method;
    std::uint64_t seed = 0;
    std::string config_text;  // JSON snapshot of the run settings

    // One row per sample, columns x0..x{d-1}, values printed round-trip exact.
    void write_csv(const std::string& path) const;
    // {"method", "seed", "rows", "dim", "config"}
    void write_sidecar(const std::string& path) const;
    static SampleSet read_csv(const std::string& path);
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Batched score: columns of x (d x B) at model time t -> d x B.
using ScoreFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double t)>;

// grad_x u(x, t) inside the closed ball |x| <= R, zero outside.
Eigen::VectorXd truncated_score(const LogDensityModel& model, const Eigen::VectorXd& x, double t, double radius);

// sqrt(1 + h/t) x + 2 (sqrt(1 + h/t) - 1) s + sqrt(h/t) z
Eigen::VectorXd reverse_step(const Eigen::VectorXd& x, double t_prev, double h, const Eigen::VectorXd& score,
                             const Eigen::VectorXd& z);

// Runs the reverse sampler with `score` evaluated only at points inside the
// ball. Chain i draws its start and noise from its own stream, so the output
// does not depend on batching. Throws SamplingError naming the step on a
// non-finite state.
SampleSet sample(const ScoreFn& score, int dim, const SamplerConfig& cfg, const std::string& method = "dps");
SampleSet sample(const LogDensityModel& model, const SamplerConfig& cfg);
SampleSet sample(const ScoreModel& model, const SamplerConfig& cfg);

// Final states of `chains` independent Langevin chains started from N(0, I),
// using the same update as the collocation chains. Throws
// DivergedChainError naming the chain.
SampleSet lmc_baseline(const TargetDistribution& target, double step, int iterations, int chains,
                       std::uint64_t seed);

}  // namespace dps
