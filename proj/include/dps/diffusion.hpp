#pragma once

// Forward noising process on [T_min, T_max] and collocation-point
// generation: a short Langevin chain on the target followed by forward
// noising at uniformly drawn times.
//
// Batches of points are stored column-wise (d x B), the layout the network
// consumes. Every row of a batch draws from its own RNG stream derived from
// (seed, round, row), so results do not depend on evaluation order.

#include "dps/random.hpp"
#include "dps/targets.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dps {

struct ForwardProcess {
    double t_min = 1e-3;
    double t_max = 0.999;

    // f(x, t) = -x / (2 (1 - t))
    Eigen::VectorXd drift(const Eigen::VectorXd& x, double t) const { return -x / (2.0 * (1.0 - t)); }
    // g(t) = sqrt(1 / (1 - t))
    double diffusion(double t) const { return std::sqrt(1.0 / (1.0 - t)); }
    // Draw from N(sqrt(1 - t) x0, t I).
    Eigen::VectorXd sample_conditional(const Eigen::VectorXd& x0, double t, Rng& rng) const;
    void validate() const;
};

struct LmcConfig {
    double step = 1.0;
    int iterations = 60;
    int batch_size = 128;
    // Training iterations between regenerations of the collocation pool.
    int refresh_interval = 1;

    void validate() const;
    // Per-target defaults: 9gaussians, rings, funnel, doublewell; any other
    // name gets the 9gaussians settings.
    static LmcConfig defaults_for(const std::string& target);
};

struct DivergedChainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LmcHooks {
    std::optional<Eigen::MatrixXd> initial;  // d x B, replaces the N(0, I) start
    bool zero_noise = false;
    std::string tag = "lmc";  // RNG stream tag
};

// x <- x + (eta / 2) grad log mu(x) + sqrt(eta) xi, from N(0, I), no
// Metropolis correction; eta is the variance of each Brownian increment.
// Throws DivergedChainError, naming the chain, on a non-finite gradient or
// once |x| > 1e8.
// Returns d x batch_size.
Eigen::MatrixXd lmc_chain(const TargetDistribution& target, const LmcConfig& cfg, std::uint64_t seed,
                          std::uint64_t round, const LmcHooks& hooks = {});

struct CollocationBatch {
    Eigen::MatrixXd x0;  // d x B
    Eigen::VectorXd t;   // B
    Eigen::MatrixXd xt;  // d x B
    Eigen::MatrixXd v1;  // d x B Rademacher probes, empty unless requested
    Eigen::MatrixXd v2;

    Eigen::Index size() const { return t.size(); }
    int dim() const { return static_cast<int>(xt.rows()); }
};

struct CollocationOptions {
    bool probes = false;
    std::optional<double> forced_t;  // test hook
};

CollocationBatch make_collocation(const Eigen::MatrixXd& x0s, const ForwardProcess& fp, std::uint64_t seed,
                                  std::uint64_t round, const CollocationOptions& opts = {});

enum class Refresh { Reuse, Regenerate };

// Funnel regenerates its pool every 10,000 iterations; the other targets
// ("9gaussians", "rings", "doublewell", "gaussian", "mog") every iteration.
Refresh refresh_policy(std::uint64_t iteration, const std::string& target);

}  // namespace dps
