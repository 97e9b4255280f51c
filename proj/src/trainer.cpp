#include "dps/trainer.hpp"

#include "dps/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dps {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint cadence must be >= 1");
    lmc.validate();
    process.validate();
}

TrainConfig TrainConfig::defaults_for(const std::string& target) {
    TrainConfig c;
    c.lmc = LmcConfig::defaults_for(target);
    c.batch_size = c.lmc.batch_size;
    if (target == "rings") {
        c.iterations = 1000000;
    } else if (target == "funnel") {
        c.learning_rate = 1e-4;
        c.clip_norm = 1000.0;
        c.lambda = 1.0;
        c.iterations = 800000;
    } else if (target == "doublewell") {
        c.iterations = 1500000;
    }
    return c;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "iteration,loss,reg,grad_norm,lr,score_error\n" << std::setprecision(10);
    for (const auto& r : rows) {
        // Values that were not computed (the initial metric row) are left empty.
        const auto field = [&](double v) -> std::ostream& { return std::isnan(v) ? os : os << v; };
        os << r.iteration << ',';
        field(r.loss) << ',';
        field(r.reg) << ',';
        field(r.grad_norm) << ',' << r.lr << ',';
        if (r.score_error) os << *r.score_error;
        os << '\n';
    }
    if (!os) throw std::runtime_error("write to " + path.string() + " failed");
}

namespace {

std::string describe_point(const Eigen::VectorXd& x, double t) {
    std::ostringstream os;
    os << std::setprecision(6) << "x = (";
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "), t = " << t;
    return os.str();
}

void check_prior(double lambda, const Eigen::MatrixXd& prior, int d) {
    if (lambda > 0.0 && prior.cols() == 0) throw std::invalid_argument("lambda > 0 needs prior draws");
    if (lambda == 0.0 && prior.cols() != 0) throw std::invalid_argument("prior draws given with lambda = 0");
    if (prior.cols() != 0 && prior.rows() != d) throw std::invalid_argument("prior draws have the wrong dimension");
}

void check_batch(const CollocationBatch& batch, int d) {
    if (batch.size() == 0) throw std::invalid_argument("empty collocation batch");
    if (batch.dim() != d) throw std::invalid_argument("collocation batch has the wrong dimension");
}

struct TargetTerms {
    Eigen::VectorXd logmu;
    Eigen::MatrixXd grad;  // d x B
    Eigen::VectorXd lap;
};

TargetTerms target_terms(const TargetDistribution& target, const Eigen::MatrixXd& x, bool laplacian) {
    const Eigen::Index n = x.cols();
    TargetTerms tt;
    tt.logmu.resize(n);
    tt.grad.resize(x.rows(), n);
    if (laplacian) tt.lap.resize(n);
    for (Eigen::Index b = 0; b < n; ++b) {
        tt.logmu[b] = target.log_mu(x.col(b));
        tt.grad.col(b) = target.grad_log_mu(x.col(b));
        if (laplacian) tt.lap[b] = target.laplacian_log_mu(x.col(b));
    }
    return tt;
}

// lambda * mean |grad u(z, T) + z|^2 and its parameter gradient.
double log_density_regularizer(const LogDensityModel& model, double lambda, const Eigen::MatrixXd& z, double T,
                               nn::NetworkParams* grad) {
    if (lambda == 0.0) return 0.0;
    const int d = static_cast<int>(z.rows());
    const Eigen::Index n = z.cols();
    Eigen::MatrixXd gu = model.score_batch(z, T);
    const Eigen::MatrixXd r = gu + z;
    const double value = lambda * r.colwise().squaredNorm().mean();
    if (grad && !model.is_analytic()) {
        nn::NetworkJet jet(model.params(), z, Eigen::VectorXd::Constant(n, T), nn::JetRequest::axes(d, n, false, false));
        nn::JetCotangent cot;
        for (int i = 0; i < d; ++i) cot.directions.push_back(2.0 * lambda * T / double(n) * r.row(i));
        *grad += jet.backward(cot);
    }
    return value;
}

}  // namespace

double residual(const LogDensityModel& model, const Eigen::VectorXd& x, double t) {
    const FieldDerivatives f = model.derivatives(x, t);
    const double d = static_cast<double>(x.size());
    const double r = 2.0 * (1.0 - t) * f.dt - (f.laplacian + f.grad.squaredNorm() + x.dot(f.grad) + d);
    if (!std::isfinite(r)) throw TrainingError("non-finite residual at " + describe_point(x, t));
    return r;
}

ObjectiveValue loss_batch(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                          const Eigen::MatrixXd& prior) {
    const int d = model.target().dim();
    check_batch(batch, d);
    check_prior(lambda, prior, d);
    ObjectiveValue v;
    for (Eigen::Index b = 0; b < batch.size(); ++b) {
        const double r = residual(model, batch.xt.col(b), batch.t[b]);
        v.loss += r * r;
    }
    v.loss /= double(batch.size());
    v.reg = log_density_regularizer(model, lambda, prior, ForwardProcess{}.t_max, nullptr);
    return v;
}

namespace {

// Shared body of the exact and Hutchinson paths. With probes, the second
// derivative term of each row is v^T (Hess u) v for the two probes; the
// gradient flows only through the second one.
ObjectiveGradient log_density_gradient(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                                       const Eigen::MatrixXd& prior, double t_max, bool probes) {
    const int d = model.target().dim();
    check_batch(batch, d);
    check_prior(lambda, prior, d);
    const Eigen::Index n = batch.size();
    ObjectiveGradient out;
    out.grad = model.params().zeros_like();
    if (probes && (batch.v1.cols() != n || batch.v2.cols() != n)) {
        throw std::invalid_argument("the probe estimator needs probes v1 and v2 on every row");
    }

    if (model.is_analytic()) {
        // No parameters to differentiate; the loss uses the exact Laplacian
        // on both paths since the field exposes no Hessian.
        for (Eigen::Index b = 0; b < n; ++b) {
            const double r = residual(model, batch.xt.col(b), batch.t[b]);
            out.value.loss += r * r;
        }
        out.value.loss /= double(n);
        out.value.reg = log_density_regularizer(model, lambda, prior, t_max, nullptr);
        return out;
    }

    const TargetDistribution& target = model.target();
    const TargetTerms tt = target_terms(target, batch.xt, !probes);

    nn::JetRequest req = nn::JetRequest::axes(d, n, true, !probes);
    if (probes) {
        req.directions.push_back(batch.v1);
        req.directions.push_back(batch.v2);
        req.second_order = {{d, d}, {d + 1, d + 1}};
    }
    nn::NetworkJet jet(model.params(), batch.xt, batch.t, req);
    const Eigen::RowVectorXd nn_value = jet.value();
    const Eigen::RowVectorXd nn_time = jet.time();
    Eigen::MatrixXd nn_grad(d, n);
    for (int k = 0; k < d; ++k) nn_grad.row(k) = jet.direction(k);

    nn::JetCotangent cot;
    cot.value.resize(1, n);
    cot.time.resize(1, n);
    cot.directions.assign(static_cast<std::size_t>(d), Eigen::MatrixXd(1, n));
    if (probes) {
        cot.second_order = {Eigen::MatrixXd(), Eigen::MatrixXd(1, n)};
    } else {
        cot.second_order.assign(static_cast<std::size_t>(d), Eigen::MatrixXd(1, n));
    }

    for (Eigen::Index b = 0; b < n; ++b) {
        const double t = batch.t[b];
        const auto x = batch.xt.col(b);
        const Eigen::VectorXd gu = (1.0 - t) * tt.grad.col(b) + t * nn_grad.col(b);
        const double dtu = -tt.logmu[b] + nn_value[b] + t * nn_time[b];
        const double first = 2.0 * (1.0 - t) * dtu - (gu.squaredNorm() + x.dot(gu) + d);
        double r_detached, r_live;
        if (probes) {
            const double q1 = (1.0 - t) * target.hessian_quadratic(x, batch.v1.col(b)) + t * jet.second_order(0)(0, b);
            const double q2 = (1.0 - t) * target.hessian_quadratic(x, batch.v2.col(b)) + t * jet.second_order(1)(0, b);
            r_detached = first - q1;
            r_live = first - q2;
            out.value.loss += 0.5 * (r_detached * r_detached + r_live * r_live);
        } else {
            double lap_nn = 0.0;
            for (int k = 0; k < d; ++k) lap_nn += jet.second_order(k)(0, b);
            r_detached = r_live = first - ((1.0 - t) * tt.lap[b] + t * lap_nn);
            out.value.loss += r_live * r_live;
        }
        if (!std::isfinite(r_detached) || !std::isfinite(r_live)) {
            throw TrainingError("non-finite residual at " + describe_point(x, t));
        }
        const double g = 2.0 * r_detached / double(n);
        cot.value(0, b) = g * 2.0 * (1.0 - t);
        cot.time(0, b) = g * 2.0 * (1.0 - t) * t;
        for (int k = 0; k < d; ++k) cot.directions[k](0, b) = -g * t * (2.0 * gu[k] + x[k]);
        if (probes) {
            cot.second_order[1](0, b) = -g * t;
        } else {
            for (int k = 0; k < d; ++k) cot.second_order[k](0, b) = -g * t;
        }
    }
    out.value.loss /= double(n);
    out.grad = jet.backward(cot);
    out.value.reg = log_density_regularizer(model, lambda, prior, t_max, &out.grad);
    return out;
}

}  // namespace

ObjectiveGradient exact_gradient(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                                 const Eigen::MatrixXd& prior) {
    return log_density_gradient(model, batch, lambda, prior, ForwardProcess{}.t_max, false);
}

ObjectiveGradient unbiased_gradient(const LogDensityModel& model, const CollocationBatch& batch, double lambda,
                                    const Eigen::MatrixXd& prior) {
    return log_density_gradient(model, batch, lambda, prior, ForwardProcess{}.t_max, true);
}

AdamInfo adam_step(nn::NetworkParams& params, AdamState& state, const nn::NetworkParams& grad,
                   std::uint64_t iteration, const AdamConfig& cfg) {
    Eigen::VectorXd g = grad.flatten();
    if (state.m.size() == 0) {
        state.m = Eigen::VectorXd::Zero(g.size());
        state.v = Eigen::VectorXd::Zero(g.size());
    }
    if (state.m.size() != g.size()) throw std::invalid_argument("optimizer state does not match the parameters");
    AdamInfo info;
    info.grad_norm = g.norm();
    if (info.grad_norm > cfg.clip_norm) g *= cfg.clip_norm / info.grad_norm;
    const double frac = static_cast<double>(iteration) / static_cast<double>(std::max<std::uint64_t>(cfg.total_iterations, 1));
    info.lr = cfg.learning_rate * std::max(0.0, 1.0 - frac);

    ++state.steps;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
    const Eigen::VectorXd step =
        (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
    params.assign(params.flatten() - info.lr * step);
    return info;
}

namespace {

// Collocation schedule shared by both training modes.
class CollocationSource {
public:
    CollocationSource(const TargetDistribution& target, const TrainConfig& cfg) : target_(target), cfg_(cfg) {
        lmc_ = cfg.lmc;
        lmc_.batch_size = cfg.batch_size;
    }

    CollocationBatch next(std::uint64_t it, bool probes) {
        if (it % static_cast<std::uint64_t>(lmc_.refresh_interval) == 0 || pool_.size() == 0) {
            pool_ = lmc_chain(target_, lmc_, cfg_.seed, it);
        }
        return make_collocation(pool_, cfg_.process, cfg_.seed, it, {probes, std::nullopt});
    }

    Eigen::MatrixXd prior(std::uint64_t it) const {
        if (cfg_.lambda == 0.0) return {};
        Rng rng = make_stream(cfg_.seed, "prior", {it});
        return standard_normal_matrix(rng, target_.dim(), cfg_.batch_size);
    }

private:
    const TargetDistribution& target_;
    const TrainConfig& cfg_;
    LmcConfig lmc_;
    Eigen::MatrixXd pool_;
};

Checkpoint make_checkpoint(const nn::NetworkParams& params, const TrainConfig& cfg, const std::string& target,
                           const std::string& kind, std::uint64_t iteration) {
    Checkpoint c;
    c.params = params;
    c.seed = cfg.seed;
    c.iteration = iteration;
    c.metadata = cfg.metadata;
    c.metadata["target"] = target;
    c.metadata["kind"] = kind;
    return c;
}

template <typename Model, typename GradFn>
TrainLog run_loop(Model& model, const TrainConfig& cfg, const std::string& kind, GradFn&& gradient,
                  const std::function<std::optional<double>(std::uint64_t, const Model&)>& metric,
                  const std::function<void(const TrainLogRow&)>& progress, std::optional<double>* initial_metric) {
    cfg.validate();
    const TargetDistribution& target = model.target();
    CollocationSource source(target, cfg);
    AdamState state;
    AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    adam.total_iterations = cfg.iterations;
    adam.clip_norm = cfg.clip_norm;
    TrainLog log;
    if (metric && initial_metric) *initial_metric = metric(0, model);
    if (cfg.checkpoint_dir) std::filesystem::create_directories(*cfg.checkpoint_dir);

    auto last_checkpoint = [&]() -> std::string {
        return log.checkpoints.empty() ? std::string("none") : log.checkpoints.back().string();
    };

    for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
        const CollocationBatch batch = source.next(it, cfg.hutchinson);
        const Eigen::MatrixXd prior = source.prior(it);
        ObjectiveGradient og;
        try {
            og = gradient(model, batch, prior);
        } catch (const TrainingError& e) {
            throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(it + 1) +
                                "; last checkpoint: " + last_checkpoint());
        }
        if (!std::isfinite(og.value.total()) || !og.grad.all_finite()) {
            throw TrainingError("non-finite loss or gradient at iteration " + std::to_string(it + 1) +
                                "; last checkpoint: " + last_checkpoint());
        }
        const AdamInfo info = adam_step(model.params(), state, og.grad, it, adam);
        TrainLogRow row{it + 1, og.value.loss, og.value.reg, info.grad_norm, info.lr, std::nullopt};

        const bool at_checkpoint = (it + 1) % cfg.checkpoint_every == 0 || it + 1 == cfg.iterations;
        if (at_checkpoint) {
            if (cfg.checkpoint_dir) {
                const auto path = *cfg.checkpoint_dir / ("ckpt_" + std::to_string(it + 1) + ".ckpt");
                save_checkpoint(path, make_checkpoint(model.params(), cfg, target.name(), kind, it + 1));
                log.checkpoints.push_back(path);
            }
            if (metric) row.score_error = metric(it + 1, model);
        }
        log.rows.push_back(row);
        if (progress) progress(row);
    }
    return log;
}

nn::Architecture arch_for(const TrainConfig& cfg, int d, int out) {
    nn::Architecture a = cfg.arch;
    a.input_dim = d;
    a.output_dim = out;
    return a;
}

}  // namespace

TrainResult train(const TargetDistribution& target, const TrainConfig& cfg, const TrainCallbacks& callbacks) {
    cfg.validate();
    LogDensityModel model(target, nn::init_network(arch_for(cfg, target.dim(), 1), cfg.seed));
    return train(std::move(model), cfg, callbacks);
}

TrainResult train(LogDensityModel model, const TrainConfig& cfg, const TrainCallbacks& callbacks) {
    if (model.is_analytic()) throw std::invalid_argument("cannot train an analytic model");
    const double t_max = cfg.process.t_max;
    const bool hutch = cfg.hutchinson;
    auto grad = [&](const LogDensityModel& m, const CollocationBatch& b, const Eigen::MatrixXd& prior) {
        return log_density_gradient(m, b, cfg.lambda, prior, t_max, hutch);
    };
    std::optional<double> initial;
    TrainLog log = run_loop(model, cfg, "logdensity", grad, callbacks.checkpoint_metric, callbacks.progress, &initial);
    if (initial) {
        log.rows.insert(log.rows.begin(), TrainLogRow{0, std::nan(""), std::nan(""), std::nan(""), 0.0, initial});
    }
    return {std::move(model), std::move(log)};
}

Eigen::VectorXd score_residual(const ScoreModel& model, const Eigen::VectorXd& x, double t) {
    const ScoreFieldDerivatives f = model.derivatives(x, t);
    const Eigen::VectorXd r = 2.0 * (1.0 - t) * f.dt -
                              (f.grad_div + 2.0 * f.jacobian.transpose() * f.s + f.s + f.jacobian.transpose() * x);
    if (!r.allFinite()) throw TrainingError("non-finite score residual at " + describe_point(x, t));
    return r;
}

namespace {

ObjectiveGradient score_gradient_impl(const ScoreModel& model, const CollocationBatch& batch, double lambda,
                                      const Eigen::MatrixXd& prior, double t_max) {
    const TargetDistribution& target = model.target();
    const int d = target.dim();
    check_batch(batch, d);
    check_prior(lambda, prior, d);
    const Eigen::Index n = batch.size();
    ObjectiveGradient out;
    out.grad = model.params().zeros_like();

    if (model.is_analytic()) {
        for (Eigen::Index b = 0; b < n; ++b) out.value.loss += score_residual(model, batch.xt.col(b), batch.t[b]).squaredNorm();
        out.value.loss /= double(n);
    } else {
        nn::JetRequest req = nn::JetRequest::axes(d, n, true, false);
        for (int i = 0; i < d; ++i) {
            for (int j = i; j < d; ++j) req.second_order.emplace_back(i, j);
        }
        nn::NetworkJet jet(model.params(), batch.xt, batch.t, req);
        const Eigen::MatrixXd v = jet.value();
        const Eigen::MatrixXd tm = jet.time();
        std::vector<Eigen::MatrixXd> dir(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) dir[j] = jet.direction(j);
        std::vector<Eigen::MatrixXd> sec(req.second_order.size());
        for (std::size_t p = 0; p < sec.size(); ++p) sec[p] = jet.second_order(static_cast<int>(p));

        nn::JetCotangent cot;
        cot.value = Eigen::MatrixXd::Zero(d, n);
        cot.time = Eigen::MatrixXd::Zero(d, n);
        cot.directions.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(d, n));
        cot.second_order.assign(sec.size(), Eigen::MatrixXd::Zero(d, n));

        for (Eigen::Index b = 0; b < n; ++b) {
            const double t = batch.t[b];
            const Eigen::VectorXd x = batch.xt.col(b);
            const Eigen::VectorXd g = target.grad_log_mu(x);
            const Eigen::MatrixXd h = target.hessian_log_mu(x);
            const Eigen::VectorXd s = (1.0 - t) * g + t * v.col(b);
            const Eigen::VectorXd dts = -g + v.col(b) + t * tm.col(b);
            Eigen::MatrixXd jac = (1.0 - t) * h;
            for (int j = 0; j < d; ++j) jac.col(j) += t * dir[j].col(b);
            Eigen::VectorXd gd = (1.0 - t) * target.grad_laplacian_log_mu(x);
            int p = 0;
            for (int i = 0; i < d; ++i) {
                for (int j = i; j < d; ++j, ++p) {
                    gd[j] += t * sec[p](i, b);
                    if (i != j) gd[i] += t * sec[p](j, b);
                }
            }
            const Eigen::VectorXd r = 2.0 * (1.0 - t) * dts - (gd + 2.0 * jac.transpose() * s + s + jac.transpose() * x);
            if (!r.allFinite()) throw TrainingError("non-finite score residual at " + describe_point(x, t));
            out.value.loss += r.squaredNorm();

            const Eigen::VectorXd gbar = 2.0 * r / double(n);
            // value: sum_j gbar_j (2 (1 - t) delta_jk - t (2 J_kj + delta_jk))
            cot.value.col(b) = (2.0 * (1.0 - t) - t) * gbar - 2.0 * t * jac * gbar;
            cot.time.col(b) = 2.0 * (1.0 - t) * t * gbar;
            const Eigen::VectorXd coef = -t * (2.0 * s + x);
            for (int j = 0; j < d; ++j) cot.directions[j].col(b) = gbar[j] * coef;
            p = 0;
            for (int i = 0; i < d; ++i) {
                for (int j = i; j < d; ++j, ++p) {
                    cot.second_order[p](i, b) += -t * gbar[j];
                    if (i != j) cot.second_order[p](j, b) += -t * gbar[i];
                }
            }
        }
        out.value.loss /= double(n);
        out.grad = jet.backward(cot);
    }

    if (lambda > 0.0) {
        const Eigen::Index m = prior.cols();
        const Eigen::MatrixXd r = model.score_batch(prior, t_max) + prior;
        out.value.reg = lambda * r.colwise().squaredNorm().mean();
        if (!model.is_analytic()) {
            nn::JetRequest value_only;
            nn::NetworkJet jet(model.params(), prior, Eigen::VectorXd::Constant(m, t_max), value_only);
            nn::JetCotangent cot;
            cot.value = 2.0 * lambda * t_max / double(m) * r;
            out.grad += jet.backward(cot);
        }
    }
    return out;
}

}  // namespace

ObjectiveGradient score_gradient(const ScoreModel& model, const CollocationBatch& batch, double lambda,
                                 const Eigen::MatrixXd& prior) {
    return score_gradient_impl(model, batch, lambda, prior, ForwardProcess{}.t_max);
}

ScoreTrainResult train_score_fpe(const TargetDistribution& target, const TrainConfig& cfg,
                                 const std::function<void(const TrainLogRow&)>& progress) {
    cfg.validate();
    ScoreModel model(target, nn::init_network(arch_for(cfg, target.dim(), target.dim()), cfg.seed));
    const double t_max = cfg.process.t_max;
    auto grad = [&](const ScoreModel& m, const CollocationBatch& b, const Eigen::MatrixXd& prior) {
        return score_gradient_impl(m, b, cfg.lambda, prior, t_max);
    };
    TrainLog log = run_loop<ScoreModel>(model, cfg, "score", grad, {}, progress, nullptr);
    return {std::move(model), std::move(log)};
}

}  // namespace dps
