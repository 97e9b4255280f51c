#pragma once

// Benchmark target densities, isotropic Gaussian-mixture oracles under the
// forward process, and mode descriptors for mixing-proportion metrics.
//
// Each density is written once, generically over its scalar type, so that
// dual numbers give exact higher derivatives (Hessians for the PINN
// residual, third derivatives for the score-FPE ablation).

#include "dps/dual.hpp"
#include "dps/random.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dps {

struct GaussianMixture {
    Eigen::VectorXd weights;
    std::vector<Eigen::VectorXd> means;
    double variance = 1.0;  // shared isotropic component variance

    int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
    std::size_t components() const { return means.size(); }
    // Weights positive and summing to 1 within 1e-12, variance > 0, equal dims.
    void validate() const;
};

// Marginal at time t of the forward process started from mix:
// means sqrt(1-t) a_i, variance (1-t) sigma^2 + t.
GaussianMixture mog_perturbed(const GaussianMixture& mix, double t);
// Normalized log-density (log-sum-exp).
double mog_logdensity(const GaussianMixture& mix, const Eigen::VectorXd& x);
Eigen::VectorXd mog_score(const GaussianMixture& mix, const Eigen::VectorXd& x);
// n x d matrix of exact draws.
Eigen::MatrixXd mog_sample(const GaussianMixture& mix, Eigen::Index n, Rng& rng);

template <typename S>
S mixture_log_density(const GaussianMixture& mix, const std::vector<S>& x) {
    const int d = mix.dim();
    const double s2 = mix.variance;
    std::vector<S> terms;
    terms.reserve(mix.components());
    for (std::size_t i = 0; i < mix.components(); ++i) {
        S sq(0.0);
        for (int k = 0; k < d; ++k) sq += square(x[k] - mix.means[i][k]);
        terms.push_back(std::log(mix.weights[i]) - sq / (2.0 * s2));
    }
    return log_sum_exp(terms) - 0.5 * d * std::log(2.0 * M_PI * s2);
}

// log pi_t(x) of the perturbed mixture as a joint function of z = (x, t).
template <typename S>
S perturbed_mixture_log_density(const GaussianMixture& mix, const std::vector<S>& z) {
    const int d = mix.dim();
    const S& t = z[d];
    const S var = (1.0 - t) * mix.variance + t;
    const S scale = sqrt(1.0 - t);
    std::vector<S> terms;
    terms.reserve(mix.components());
    for (std::size_t i = 0; i < mix.components(); ++i) {
        S sq(0.0);
        for (int k = 0; k < d; ++k) sq += square(z[k] - scale * mix.means[i][k]);
        terms.push_back(std::log(mix.weights[i]) - sq / (2.0 * var));
    }
    return log_sum_exp(terms) - 0.5 * d * log(2.0 * M_PI * var);
}

struct MixtureDensity {
    GaussianMixture mix;
    int dim() const { return mix.dim(); }
    template <typename S>
    S operator()(const std::vector<S>& x) const {
        return mixture_log_density(mix, x);
    }
    Eigen::VectorXd grad(const Eigen::VectorXd& x) const { return mog_score(mix, x); }
};

// Radial mixture sum_i w_i N(r; c_i, variance) with angle uniform, written in
// Cartesian coordinates (hence the -log r Jacobian). r is clamped below at
// r_min.
struct RingsDensity {
    std::vector<double> radii{2.0, 4.0, 6.0, 8.0};
    std::vector<double> weights{0.05, 0.45, 0.05, 0.45};
    double variance = 0.04;
    double r_min = 1e-6;

    int dim() const { return 2; }
    template <typename S>
    S operator()(const std::vector<S>& x) const {
        const S r2 = x[0] * x[0] + x[1] * x[1];
        const S r = std::sqrt(primal(r2)) < r_min ? S(r_min) : sqrt(r2);
        std::vector<S> terms;
        for (std::size_t i = 0; i < radii.size(); ++i) {
            terms.push_back(std::log(weights[i]) - square(r - radii[i]) / (2.0 * variance));
        }
        return log_sum_exp(terms) - log(r);
    }
    Eigen::VectorXd grad(const Eigen::VectorXd& x) const;
};

// N(x_0; 0, 9) N(x_{1:}; 0, exp(x_0) I) without normalizing constants, so
// log mu(0) = 0.
struct FunnelDensity {
    int d = 10;
    int dim() const { return d; }
    template <typename S>
    S operator()(const std::vector<S>& x) const {
        S tail(0.0);
        for (int i = 1; i < d; ++i) tail += x[i] * x[i];
        return -(x[0] * x[0]) / 18.0 - 0.5 * (d - 1) * x[0] - 0.5 * exp(-x[0]) * tail;
    }
    Eigen::VectorXd grad(const Eigen::VectorXd& x) const;
};

// sum_{i<w} (-x_i^4 + 6 x_i^2 + 0.5 x_i) - sum_{i>=w} x_i^2 / 2.
struct DoubleWellDensity {
    int d = 30;
    int wells = 3;
    int dim() const { return d; }
    template <typename S>
    S operator()(const std::vector<S>& x) const {
        S acc(0.0);
        for (int i = 0; i < d; ++i) {
            const S x2 = x[i] * x[i];
            if (i < wells) {
                acc += -(x2 * x2) + 6.0 * x2 + 0.5 * x[i];
            } else {
                acc -= 0.5 * x2;
            }
        }
        return acc;
    }
    Eigen::VectorXd grad(const Eigen::VectorXd& x) const;
};

// Mass of e^{-x^4 + 6x^2 + 0.5x} on x > 0, by adaptive quadrature (cached).
double doublewell_positive_mass();

enum class ModeRule { NearestCenter, SignPattern, NearestRadius };

struct ModeDescriptor {
    std::string label;
    Eigen::VectorXd center;  // NearestCenter
    double radius = 0.0;     // NearestRadius
    Eigen::VectorXi signs;   // SignPattern: +1/-1 per leading coordinate
    double weight = 0.0;
};

// Partition of the sample space into modes by one assignment rule.
struct ModeSet {
    ModeRule rule = ModeRule::NearestCenter;
    std::vector<ModeDescriptor> modes;

    int assign(const Eigen::VectorXd& x) const;
    Eigen::VectorXd weights() const;
};

class TargetDistribution {
public:
    using Density = std::variant<MixtureDensity, RingsDensity, FunnelDensity, DoubleWellDensity>;

    TargetDistribution(std::string name, Density density, std::optional<ModeSet> modes,
                       std::optional<GaussianMixture> oracle);

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    const Density& density() const { return density_; }
    const std::optional<ModeSet>& modes() const { return modes_; }
    // Exact mixture when the target is a Gaussian mixture.
    const std::optional<GaussianMixture>& oracle() const { return oracle_; }

    double log_mu(const Eigen::VectorXd& x) const;
    Eigen::VectorXd grad_log_mu(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd hessian_log_mu(const Eigen::VectorXd& x) const;
    double laplacian_log_mu(const Eigen::VectorXd& x) const;
    // v^T (Hessian of log mu) v
    double hessian_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;
    // Gradient of the Laplacian of log mu.
    Eigen::VectorXd grad_laplacian_log_mu(const Eigen::VectorXd& x) const;

private:
    std::string name_;
    Density density_;
    int dim_;
    std::optional<ModeSet> modes_;
    std::optional<GaussianMixture> oracle_;
};

// variance is the shared component variance sigma^2 (0.3 by default).
TargetDistribution make_9gaussians(double variance = 0.3);
TargetDistribution make_rings();
TargetDistribution make_funnel();
TargetDistribution make_doublewell();
// Any isotropic mixture; modes assigned to the nearest mean.
TargetDistribution make_mixture_target(std::string name, GaussianMixture mix);
// Standard normal N(0, I_d).
TargetDistribution make_gaussian(int d);
// "9gaussians", "rings", "funnel", "doublewell", "gaussian" (d = 2).
TargetDistribution make_target(const std::string& name);

// n x d exact draws from the target: mixtures directly, Funnel
// hierarchically, Rings by radius mixture plus uniform angle, Double-well
// by per-coordinate rejection from a two-Gaussian envelope.
Eigen::MatrixXd sample_reference(const TargetDistribution& target, Eigen::Index n, Rng& rng);

}  // namespace dps
