#pragma once

// Reference quantities for two-component Gaussian mixtures that share their
// means and differ only in weights: closed-form KL lower / Fisher upper
// bounds, numeric divergences along the forward process, and a
// finite-difference residual of the score equation.

#include "dps/model.hpp"
#include "dps/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace dps {

// pi = w1 N(a1, I) + w2 N(a2, I) and pi~ = w~1 N(a1, I) + w~2 N(a2, I).
struct MogPair {
    Eigen::VectorXd a1, a2;
    Eigen::Vector2d w, w_tilde;

    int dim() const { return static_cast<int>(a1.size()); }
    void validate() const;
    GaussianMixture first() const;
    GaussianMixture second() const;
};

// d = 2 pair with means uniform in [-box, box]^2 at distance >= min_separation
// and weights uniform in [0.05, 0.95].
MogPair random_separated_pair(Rng& rng, double min_separation = 10.0, double box = 7.0);

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleOptions {
    // Tensor-grid Gauss-Legendre (5 nodes per cell) over [-h, h]^2; the cell
    // count per axis doubles until successive estimates differ by < tol.
    double half_width = 12.0;
    double tol = 1e-6;
    int initial_cells = 16;
    int max_cells = 1024;
    // d > 2: plain Monte Carlo under pi_t.
    int mc_samples = 200000;
    std::uint64_t seed = 0;
};

struct DivergenceEstimate {
    double value = 0.0;
    // Last change between refinements (quadrature) or standard error (MC).
    double error = 0.0;
    bool quadrature = true;
    int cells = 0;  // per axis at convergence
};

double kl_lower_bound(const MogPair& pair);
// Throws std::invalid_argument if any weight is zero.
double fisher_upper_bound(const MogPair& pair);

// Divergences between the two mixtures after perturbation to time t.
DivergenceEstimate numeric_kl(const MogPair& pair, double t, const OracleOptions& opts = {});
// E_pi |grad log pi - grad log pi~|^2
DivergenceEstimate numeric_fisher(const MogPair& pair, double t, const OracleOptions& opts = {});
// E_pi (log pi - log pi~)^2
DivergenceEstimate logdensity_gap(const MogPair& pair, double t, const OracleOptions& opts = {});

// d_t s - grad_x[(g^2/2)(div s + |s|^2) - f.s - div f] for f = -x / (2(1 - t)),
// g^2 = 1 / (1 - t). s, d_t s and div s come from the field; the outer
// gradient is a central difference with step 1e-5.
Eigen::VectorXd score_fpe_residual(const AnalyticScore& field, const Eigen::VectorXd& x, double t);

}  // namespace dps
