#include "dps/diffusion.hpp"

#include "dps/parallel.hpp"

#include <cmath>

namespace dps {

namespace {

constexpr double kRunaway = 1e8;

}  // namespace

Eigen::VectorXd ForwardProcess::sample_conditional(const Eigen::VectorXd& x0, double t, Rng& rng) const {
    return std::sqrt(1.0 - t) * x0 + std::sqrt(t) * standard_normal_matrix(rng, x0.size(), 1);
}

void ForwardProcess::validate() const {
    if (!(t_min > 0.0 && t_min < t_max && t_max < 1.0)) {
        throw std::invalid_argument("forward process needs 0 < t_min < t_max < 1");
    }
}

void LmcConfig::validate() const {
    if (!(step >= 0.0) || !std::isfinite(step)) throw std::invalid_argument("lmc step size must be >= 0");
    if (iterations < 1) throw std::invalid_argument("lmc iterations must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("lmc batch size must be >= 1");
    if (refresh_interval < 1) throw std::invalid_argument("lmc refresh interval must be >= 1");
}

LmcConfig LmcConfig::defaults_for(const std::string& target) {
    if (target == "rings") return {0.15, 100, 200, 1};
    if (target == "funnel") return {0.02, 10000, 200, 10000};
    if (target == "doublewell") return {0.02, 100, 700, 1};
    return {1.0, 60, 128, 1};
}

Eigen::MatrixXd lmc_chain(const TargetDistribution& target, const LmcConfig& cfg, std::uint64_t seed,
                          std::uint64_t round, const LmcHooks& hooks) {
    cfg.validate();
    const int d = target.dim();
    if (hooks.initial && (hooks.initial->rows() != d || hooks.initial->cols() != cfg.batch_size)) {
        throw std::invalid_argument("lmc initial batch has the wrong shape");
    }
    const double drift = 0.5 * cfg.step;
    const double noise = hooks.zero_noise ? 0.0 : std::sqrt(cfg.step);
    Eigen::MatrixXd out(d, cfg.batch_size);
    parallel_for(cfg.batch_size, [&](std::int64_t r) {
        Rng rng = make_stream(seed, hooks.tag, {round, static_cast<std::uint64_t>(r)});
        Eigen::VectorXd x = hooks.initial ? Eigen::VectorXd(hooks.initial->col(r))
                                            : Eigen::VectorXd(standard_normal_matrix(rng, d, 1));
        for (int k = 0; k < cfg.iterations; ++k) {
            const Eigen::VectorXd g = target.grad_log_mu(x);
            if (!g.allFinite()) {
                throw DivergedChainError("lmc chain " + std::to_string(r) + " on '" + target.name() +
                                         "' diverged at step " + std::to_string(k) + " (non-finite gradient)");
            }
            x += drift * g;
            if (noise != 0.0) x += noise * standard_normal_matrix(rng, d, 1);
            if (!(x.norm() <= kRunaway)) {
                throw DivergedChainError("lmc chain " + std::to_string(r) + " on '" + target.name() +
                                         "' diverged at step " + std::to_string(k) + " (|x| > 1e8)");
            }
        }
        if (!x.allFinite()) {
            throw DivergedChainError("lmc chain " + std::to_string(r) + " on '" + target.name() +
                                     "' diverged at step " + std::to_string(cfg.iterations));
        }
        out.col(r) = x;
    });
    return out;
}

CollocationBatch make_collocation(const Eigen::MatrixXd& x0s, const ForwardProcess& fp, std::uint64_t seed,
                                  std::uint64_t round, const CollocationOptions& opts) {
    fp.validate();
    if (x0s.cols() == 0 || x0s.rows() == 0) throw std::invalid_argument("make_collocation needs a nonempty batch");
    const Eigen::Index d = x0s.rows(), n = x0s.cols();
    CollocationBatch b;
    b.x0 = x0s;
    b.t.resize(n);
    b.xt.resize(d, n);
    if (opts.probes) {
        b.v1.resize(d, n);
        b.v2.resize(d, n);
    }
    std::uniform_real_distribution<double> unif(fp.t_min, fp.t_max);
    for (Eigen::Index r = 0; r < n; ++r) {
        Rng rng = make_stream(seed, "collocation", {round, static_cast<std::uint64_t>(r)});
        const double t = opts.forced_t ? *opts.forced_t : unif(rng);
        b.t[r] = t;
        b.xt.col(r) = fp.sample_conditional(x0s.col(r), t, rng);
        if (opts.probes) {
            b.v1.col(r) = rademacher(rng, d);
            b.v2.col(r) = rademacher(rng, d);
        }
    }
    return b;
}

Refresh refresh_policy(std::uint64_t iteration, const std::string& target) {
    if (target == "funnel") return iteration % 10000 == 0 ? Refresh::Regenerate : Refresh::Reuse;
    if (target == "9gaussians" || target == "rings" || target == "doublewell" || target == "gaussian" ||
        target == "mog") {
        return Refresh::Regenerate;
    }
    throw std::invalid_argument("refresh_policy: unknown target '" + target + "'");
}

}  // namespace dps
