#include "dps/model.hpp"

#include <stdexcept>

namespace dps {

AnalyticLogDensity gaussian_exact_field() {
    return [](const Eigen::VectorXd& x, double) {
        FieldDerivatives f;
        f.u = -0.5 * x.squaredNorm();
        f.grad = -x;
        f.laplacian = -static_cast<double>(x.size());
        f.dt = 0.0;
        return f;
    };
}

AnalyticLogDensity mog_exact_field(GaussianMixture mix, double offset) {
    mix.validate();
    return [mix = std::move(mix), offset](const Eigen::VectorXd& x, double t) {
        const int d = mix.dim();
        const auto f = [&](const auto& z) { return perturbed_mixture_log_density(mix, z); };
        Eigen::VectorXd z(d + 1);
        z << x, t;
        const Eigen::VectorXd g = autodiff::gradient(f, z);
        FieldDerivatives out;
        out.u = autodiff::value(f, z) + offset;
        out.grad = g.head(d);
        out.dt = g[d];
        for (int i = 0; i < d; ++i) {
            const Eigen::VectorXd e = Eigen::VectorXd::Unit(d + 1, i);
            out.laplacian += autodiff::second_directional(f, z, e, e);
        }
        return out;
    };
}

AnalyticScore mog_exact_score(GaussianMixture mix) {
    mix.validate();
    return [mix = std::move(mix)](const Eigen::VectorXd& x, double t) {
        const int d = mix.dim();
        const auto f = [&](const auto& z) { return perturbed_mixture_log_density(mix, z); };
        Eigen::VectorXd z(d + 1);
        z << x, t;
        const Eigen::VectorXd et = Eigen::VectorXd::Unit(d + 1, d);
        ScoreFieldDerivatives out;
        out.s = autodiff::gradient(f, z).head(d);
        out.dt.resize(d);
        out.jacobian.resize(d, d);
        out.grad_div = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < d; ++i) {
            const Eigen::VectorXd ei = Eigen::VectorXd::Unit(d + 1, i);
            out.dt[i] = autodiff::second_directional(f, z, ei, et);
            for (int j = 0; j < d; ++j) {
                const Eigen::VectorXd ej = Eigen::VectorXd::Unit(d + 1, j);
                out.jacobian(i, j) = autodiff::second_directional(f, z, ei, ej);
                out.grad_div[j] += autodiff::third_directional(f, z, ej, ei, ei);
            }
        }
        return out;
    };
}

LogDensityModel::LogDensityModel(TargetDistribution target, nn::NetworkParams params)
    : target_(std::move(target)), params_(std::move(params)) {
    params_.validate();
    if (params_.arch.input_dim != target_.dim() || params_.arch.output_dim != 1) {
        throw std::invalid_argument("log-density network must map R^d x [0,1] to a scalar for the target dimension");
    }
}

LogDensityModel LogDensityModel::analytic(TargetDistribution target, AnalyticLogDensity field) {
    nn::Architecture a;
    a.input_dim = target.dim();
    a.hidden = 1;
    a.embedding.dim = 2;
    LogDensityModel m(std::move(target), nn::zero_network(a));
    m.field_ = std::move(field);
    return m;
}

double LogDensityModel::u(const Eigen::VectorXd& x, double t) const {
    if (field_) return field_(x, t).u;
    return (1.0 - t) * target_.log_mu(x) + t * nn::nn_eval(params_, x, t);
}

FieldDerivatives LogDensityModel::derivatives(const Eigen::VectorXd& x, double t) const {
    if (field_) return field_(x, t);
    const nn::EvalRecord r = nn::nn_derivatives(params_, x, t);
    const double logmu = target_.log_mu(x);
    FieldDerivatives f;
    f.u = (1.0 - t) * logmu + t * r.u;
    f.grad = (1.0 - t) * target_.grad_log_mu(x) + t * r.grad_x;
    f.laplacian = (1.0 - t) * target_.laplacian_log_mu(x) + t * r.laplacian_x;
    f.dt = -logmu + r.u + t * r.dt;
    return f;
}

Eigen::VectorXd LogDensityModel::score(const Eigen::VectorXd& x, double t) const {
    Eigen::MatrixXd xs = x;
    return score_batch(xs, t).col(0);
}

Eigen::MatrixXd LogDensityModel::score_batch(const Eigen::MatrixXd& x, double t) const {
    const int d = target_.dim();
    const Eigen::Index n = x.cols();
    Eigen::MatrixXd out(d, n);
    if (field_) {
        for (Eigen::Index b = 0; b < n; ++b) out.col(b) = field_(x.col(b), t).grad;
        return out;
    }
    nn::NetworkJet jet(params_, x, Eigen::VectorXd::Constant(n, t), nn::JetRequest::axes(d, n, false, false));
    for (int k = 0; k < d; ++k) out.row(k) = t * jet.direction(k);
    for (Eigen::Index b = 0; b < n; ++b) out.col(b) += (1.0 - t) * target_.grad_log_mu(x.col(b));
    return out;
}

ScoreModel::ScoreModel(TargetDistribution target, nn::NetworkParams params)
    : target_(std::move(target)), params_(std::move(params)) {
    params_.validate();
    if (params_.arch.input_dim != target_.dim() || params_.arch.output_dim != target_.dim()) {
        throw std::invalid_argument("score network must map R^d x [0,1] to R^d for the target dimension");
    }
}

ScoreModel ScoreModel::analytic(TargetDistribution target, AnalyticScore field) {
    nn::Architecture a;
    a.input_dim = target.dim();
    a.output_dim = target.dim();
    a.hidden = 1;
    a.embedding.dim = 2;
    ScoreModel m(std::move(target), nn::zero_network(a));
    m.field_ = std::move(field);
    return m;
}

Eigen::VectorXd ScoreModel::score(const Eigen::VectorXd& x, double t) const {
    if (field_) return field_(x, t).s;
    return (1.0 - t) * target_.grad_log_mu(x) + t * nn::nn_eval_vector(params_, x, t);
}

Eigen::MatrixXd ScoreModel::score_batch(const Eigen::MatrixXd& x, double t) const {
    const int d = target_.dim();
    const Eigen::Index n = x.cols();
    Eigen::MatrixXd out(d, n);
    if (field_) {
        for (Eigen::Index b = 0; b < n; ++b) out.col(b) = field_(x.col(b), t).s;
        return out;
    }
    nn::JetRequest value_only;
    nn::NetworkJet jet(params_, x, Eigen::VectorXd::Constant(n, t), value_only);
    out = t * jet.value();
    for (Eigen::Index b = 0; b < n; ++b) out.col(b) += (1.0 - t) * target_.grad_log_mu(x.col(b));
    return out;
}

ScoreFieldDerivatives ScoreModel::derivatives(const Eigen::VectorXd& x, double t) const {
    if (field_) return field_(x, t);
    const int d = target_.dim();
    nn::JetRequest req = nn::JetRequest::axes(d, 1, true, false);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) req.second_order.emplace_back(i, j);
    }
    const Eigen::MatrixXd xs = x;
    nn::NetworkJet jet(params_, xs, Eigen::VectorXd::Constant(1, t), req);

    const Eigen::VectorXd g = target_.grad_log_mu(x);
    const Eigen::MatrixXd h = target_.hessian_log_mu(x);
    const Eigen::VectorXd nn_value = jet.value().col(0);
    ScoreFieldDerivatives out;
    out.s = (1.0 - t) * g + t * nn_value;
    out.dt = -g + nn_value + t * jet.time().col(0);
    out.jacobian = (1.0 - t) * h;
    for (int j = 0; j < d; ++j) out.jacobian.col(j) += t * jet.direction(j).col(0);
    out.grad_div = (1.0 - t) * target_.grad_laplacian_log_mu(x);
    int p = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j, ++p) {
            const Eigen::VectorXd second = jet.second_order(p).col(0);
            // d_i d_j NN_i contributes to component j of grad div, and
            // d_i d_j NN_j to component i.
            out.grad_div[j] += t * second[i];
            if (i != j) out.grad_div[i] += t * second[j];
        }
    }
    return out;
}

}  // namespace dps
