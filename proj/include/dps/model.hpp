#pragma once

// Learned fields anchored at the target through the initial condition:
//
//   log-density  u(x, t) = (1 - t) log mu(x) + t NN(x, t)
//   score        s(x, t) = (1 - t) grad log mu(x) + t NN_vec(x, t)
//
// Both coefficients vanish exactly at t = 0 so the initial condition holds
// bit for bit. Either model can instead wrap an analytic field (used as an
// exact-solution oracle in tests).

#include "dps/network.hpp"
#include "dps/targets.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace dps {

struct FieldDerivatives {
    double u = 0.0;
    Eigen::VectorXd grad;
    double laplacian = 0.0;
    double dt = 0.0;
};

using AnalyticLogDensity = std::function<FieldDerivatives(const Eigen::VectorXd& x, double t)>;

// u*(x, t) = -|x|^2 / 2: the stationary solution for a standard normal target.
AnalyticLogDensity gaussian_exact_field();
// u*(x, t) = log pi_t(x) + offset for the perturbed mixture, derivatives
// by dual numbers.
AnalyticLogDensity mog_exact_field(GaussianMixture mix, double offset = 0.0);

class LogDensityModel {
public:
    LogDensityModel(TargetDistribution target, nn::NetworkParams params);
    static LogDensityModel analytic(TargetDistribution target, AnalyticLogDensity field);

    const TargetDistribution& target() const { return target_; }
    const nn::NetworkParams& params() const { return params_; }
    nn::NetworkParams& params() { return params_; }
    bool is_analytic() const { return static_cast<bool>(field_); }
    const AnalyticLogDensity& field() const { return field_; }

    double u(const Eigen::VectorXd& x, double t) const;
    FieldDerivatives derivatives(const Eigen::VectorXd& x, double t) const;
    Eigen::VectorXd score(const Eigen::VectorXd& x, double t) const;
    // grad_x u at the columns of x (d x B), all at time t.
    Eigen::MatrixXd score_batch(const Eigen::MatrixXd& x, double t) const;

private:
    TargetDistribution target_;
    nn::NetworkParams params_;
    AnalyticLogDensity field_;
};

// Score with the input derivatives the score-FPE residual needs.
struct ScoreFieldDerivatives {
    Eigen::VectorXd s;
    Eigen::VectorXd dt;            // d/dt s
    Eigen::MatrixXd jacobian;      // J(i, j) = d s_i / d x_j
    Eigen::VectorXd grad_div;      // d/dx_j (div s)
};

using AnalyticScore = std::function<ScoreFieldDerivatives(const Eigen::VectorXd& x, double t)>;

// s* = grad log pi_t of the perturbed mixture.
AnalyticScore mog_exact_score(GaussianMixture mix);

class ScoreModel {
public:
    // params must have output_dim equal to the target dimension.
    ScoreModel(TargetDistribution target, nn::NetworkParams params);
    static ScoreModel analytic(TargetDistribution target, AnalyticScore field);

    const TargetDistribution& target() const { return target_; }
    const nn::NetworkParams& params() const { return params_; }
    nn::NetworkParams& params() { return params_; }
    bool is_analytic() const { return static_cast<bool>(field_); }

    Eigen::VectorXd score(const Eigen::VectorXd& x, double t) const;
    Eigen::MatrixXd score_batch(const Eigen::MatrixXd& x, double t) const;
    ScoreFieldDerivatives derivatives(const Eigen::VectorXd& x, double t) const;

private:
    TargetDistribution target_;
    nn::NetworkParams params_;
    AnalyticScore field_;
};

}  // namespace dps
