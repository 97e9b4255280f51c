#pragma once

// PINN training of the log-density model on the rescaled Fokker-Planck
// equation
//
//   R(x, t) = 2 (1 - t) du/dt - [ lap u + |grad u|^2 + x . grad u + d ]
//
// with objective mean R^2 over collocation points plus an optional terminal
// regularizer lambda * mean |grad u(z, T_max) + z|^2, z ~ N(0, I). Gradients
// with respect to the network are exact (reverse mode through the input
// jets), either with the exact Laplacian or with the unbiased two-probe
// Hutchinson estimator. The score-FPE ablation trains a vector field on the
// gradient of the same equation.

#include "dps/diffusion.hpp"
#include "dps/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dps {

struct TrainConfig {
    double learning_rate = 5e-4;
    std::uint64_t iterations = 400000;
    double clip_norm = 1.0;
    double lambda = 0.0;
    int batch_size = 128;  // collocation points per iteration (also the LMC batch)
    std::uint64_t seed = 0;
    bool hutchinson = false;
    std::uint64_t checkpoint_every = 10000;
    std::optional<std::filesystem::path> checkpoint_dir;
    LmcConfig lmc;
    ForwardProcess process;
    nn::Architecture arch;  // input_dim/output_dim are set from the target
    // Extra checkpoint metadata (no whitespace in keys or values).
    std::map<std::string, std::string> metadata;

    void validate() const;
    // Per-target defaults: 9gaussians, rings, funnel, doublewell; other names
    // get the 9gaussians settings.
    static TrainConfig defaults_for(const std::string& target);
};

struct TrainLogRow {
    std::uint64_t iteration = 0;
    double loss = 0.0;  // residual part of the objective
    double reg = 0.0;
    double grad_norm = 0.0;  // before clipping
    double lr = 0.0;
    std::optional<double> score_error;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::vector<std::filesystem::path> checkpoints;

    // iteration,loss,reg,grad_norm,lr,score_error (empty when not computed)
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double residual(const LogDensityModel& model, const Eigen::VectorXd& x, double t);

struct ObjectiveValue {
    double loss = 0.0;
    double reg = 0.0;
    double total() const { return loss + reg; }
};

struct ObjectiveGradient {
    ObjectiveValue value;
    nn::NetworkParams grad;
};

// prior is d x Bz; it must be nonempty exactly when lambda > 0.
ObjectiveValue loss_batch(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                          const Eigen::MatrixXd& prior);
ObjectiveGradient exact_gradient(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                                 const Eigen::MatrixXd& prior);
// Per row 2 detach(R_v1) grad R_v2, where R_v has v^T (Hess u) v in place of
// lap u. The reported loss is mean (R_v1^2 + R_v2^2) / 2.
ObjectiveGradient unbiased_gradient(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                                    const Eigen::MatrixXd& prior);

struct AdamState {
    Eigen::VectorXd m, v;
    std::uint64_t steps = 0;
};

struct AdamConfig {
    double learning_rate = 5e-4;
    std::uint64_t total_iterations = 1;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamInfo {
    double grad_norm = 0.0;  // before clipping
    double lr = 0.0;
};

// Global-norm clipping, then Adam with bias correction; the learning rate
// decays linearly to zero over total_iterations (iteration is 0-based).
AdamInfo adam_step(nn::NetworkParams& params, AdamState& state, const nn::NetworkParams& grad,
                   std::uint64_t iteration, const AdamConfig& cfg);

struct TrainCallbacks {
    // Called at every checkpoint; the value is logged as score_error.
    std::function<std::optional<double>(std::uint64_t, const LogDensityModel&)> checkpoint_metric;
    std::function<void(const TrainLogRow&)> progress;
};

struct TrainResult {
    LogDensityModel model;
    TrainLog log;
};

TrainResult train(const TargetDistribution& target, const TrainConfig& cfg, const TrainCallbacks& callbacks = {});
// Continue from given parameters.
TrainResult train(LogDensityModel model, const TrainConfig& cfg, const TrainCallbacks& callbacks = {});

// Score-FPE ablation: R_j = 2 (1 - t) ds_j/dt - d/dx_j [div s + |s|^2 + x . s]
Eigen::VectorXd score_residual(const ScoreModel& model, const Eigen::VectorXd& x, double t);
ObjectiveGradient score_gradient(const ScoreModel& model, const CollocationBatch& batch, double lambda,
                                 const Eigen::MatrixXd& prior);

struct ScoreTrainResult {
    ScoreModel model;
    TrainLog log;
};

ScoreTrainResult train_score_fpe(const TargetDistribution& target, const TrainConfig& cfg,
                                 const std::function<void(const TrainLogRow&)>& progress = {});

}  // namespace dps
