#pragma once

// Sample-quality metrics: k-nearest-neighbour KL divergence, mode-weight
// recovery and score error against the exact perturbed mixture.

#include "dps/model.hpp"
#include "dps/targets.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dps {

struct UnsupportedTargetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KnnKl {
    double estimate = 0.0;
    // Nearest-neighbour distances that were exactly zero and replaced by 1e-12.
    int zero_distances = 0;
};

// (d/n) sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1)) for p (n x d) and
// q (m x d); rho_k is the k-th neighbour distance within p (excluding the
// point itself), nu_k the k-th neighbour distance to q. Brute force.
KnnKl knn_kl_detail(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int k = 5);
// As above; prints a warning to stderr when zero distances were perturbed.
double knn_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int k = 5);

// Leading coordinates used for KL: 2 for Funnel, 5 for Double-well, all
// otherwise.
int kl_projection_dims(const std::string& target, int dim);

// Empirical mode weights of the rows of `samples`.
Eigen::VectorXd mode_proportions(const Eigen::MatrixXd& samples, const ModeSet& modes);
// |w_hat - w_true|_2
double mixing_error(const Eigen::MatrixXd& samples, const ModeSet& modes);

// Mean over rows x of |grad_x u(x, t) - grad log pi_t(x)|^2, with pi_t the
// exactly perturbed mixture. Throws UnsupportedTargetError without an oracle.
double score_l2_error(const LogDensityModel& model, double t, const Eigen::MatrixXd& eval);
double score_l2_error(const ScoreModel& model, double t, const Eigen::MatrixXd& eval);
// n x d draws from pi_t of the target's mixture oracle.
Eigen::MatrixXd perturbed_eval_samples(const TargetDistribution& target, double t, Eigen::Index n, Rng& rng);

struct MetricsReport {
    std::string target;
    std::string method;
    std::uint64_t seed = 0;
    Eigen::Index samples = 0;
    Eigen::Index reference_samples = 0;
    int k = 5;
    int kl_dims = 0;
    std::optional<double> kl_estimate;
    std::optional<double> mixing_l2;
    std::optional<double> score_l2;

    std::string to_json() const;
    // Appends one row keyed by (target, method, seed); writes the header
    // first when the file is new.
    void append_csv(const std::string& path) const;
};

}  // namespace dps
