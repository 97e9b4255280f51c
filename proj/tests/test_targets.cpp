#include "dps/targets.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace dps;
using dps::test::rel_err;

namespace {

Eigen::VectorXd fd_grad(const TargetDistribution& t, const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(x.size(), i) * h;
        g[i] = (t.log_mu(x + e) - t.log_mu(x - e)) / (2 * h);
    }
    return g;
}

Eigen::VectorXd fd_grad(const GaussianMixture& m, const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(x.size(), i) * h;
        g[i] = (mog_logdensity(m, x + e) - mog_logdensity(m, x - e)) / (2 * h);
    }
    return g;
}

GaussianMixture two_mode(double w1, double var) {
    GaussianMixture m;
    m.weights = Eigen::Vector2d(w1, 1.0 - w1);
    m.means = {Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5)};
    m.variance = var;
    return m;
}

}  // namespace

TEST_SUITE("targets") {
    TEST_CASE("9-Gaussians weights, grid and log density") {
        auto t = make_9gaussians();
        REQUIRE(t.oracle());
        const auto& mix = *t.oracle();
        CHECK(mix.variance == 0.3);
        CHECK(mix.components() == 9);
        CHECK(std::abs(mix.weights.sum() - 1.0) <= 1e-12);
        for (std::size_t i = 0; i < 9; ++i) {
            const bool corner = std::abs(mix.means[i][0]) == 5.0 && std::abs(mix.means[i][1]) == 5.0;
            CHECK(mix.weights[i] == (corner ? 0.2 : 0.04));
        }
        CHECK(mix.means[0] == Eigen::Vector2d(-5, -5));
        CHECK(mix.means[1] == Eigen::Vector2d(-5, 0));
        CHECK(mix.means[8] == Eigen::Vector2d(5, 5));
        // High-precision direct evaluation of the mixture formula.
        CHECK(rel_err(t.log_mu(Eigen::Vector2d(-5, -5)), -2.2433421745175098) <= 1e-12);
        REQUIRE(t.modes());
        CHECK(std::abs(t.modes()->weights().sum() - 1.0) <= 1e-12);
        CHECK(t.modes()->assign(Eigen::Vector2d(4, 6)) == 8);
        CHECK(t.modes()->assign(Eigen::Vector2d(-0.4, 0.3)) == 4);
    }

    TEST_CASE("9-Gaussians variance is configurable") {
        auto t = make_9gaussians(0.09);
        CHECK(t.oracle()->variance == 0.09);
    }

    TEST_CASE("Rings weights, symmetry and gradient") {
        auto t = make_rings();
        const auto& rings = std::get<RingsDensity>(t.density());
        CHECK(rings.radii == std::vector<double>{2, 4, 6, 8});
        CHECK(rings.weights == std::vector<double>{0.05, 0.45, 0.05, 0.45});
        CHECK(std::abs(t.modes()->weights().sum() - 1.0) <= 1e-12);

        Rng rng = make_stream(1, "rings-test");
        std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
        const Eigen::Vector2d x(1.3, -3.1);
        for (int k = 0; k < 10; ++k) {
            const double a = u(rng);
            Eigen::Matrix2d r;
            r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
            CHECK(std::abs(t.log_mu(r * x) - t.log_mu(x)) <= 1e-12);
        }
        for (int k = 0; k < 5; ++k) {
            const double a = u(rng);
            const Eigen::Vector2d p(4 * std::cos(a), 4 * std::sin(a));
            CHECK(rel_err(t.grad_log_mu(p), fd_grad(t, p)) <= 1e-6);
        }
        CHECK(rel_err(t.grad_log_mu(Eigen::Vector2d(2.7, 1.1)), fd_grad(t, Eigen::Vector2d(2.7, 1.1))) <= 1e-6);
        CHECK(std::isfinite(t.log_mu(Eigen::Vector2d::Zero())));
        CHECK(t.modes()->assign(Eigen::Vector2d(0, 5.2)) == 2);
        CHECK(t.modes()->assign(Eigen::Vector2d(0.1, 0.1)) == 0);
    }

    TEST_CASE("Funnel value, x0 derivative and gradient") {
        auto t = make_funnel();
        CHECK(t.dim() == 10);
        CHECK_FALSE(t.modes());
        CHECK(t.log_mu(Eigen::VectorXd::Zero(10)) == 0.0);
        CHECK(t.grad_log_mu(Eigen::VectorXd::Zero(10))[0] == -4.5);
        Rng rng = make_stream(2, "funnel-test");
        for (int k = 0; k < 5; ++k) {
            Eigen::VectorXd x = standard_normal_matrix(rng, 10, 1);
            x[0] = -2.0 + 4.0 * k / 4.0;
            CHECK(rel_err(t.grad_log_mu(x), fd_grad(t, x, 1e-6)) <= 1e-6);
        }
    }

    TEST_CASE("Double-well positive mass and mode weights") {
        // 30-digit quadrature of the 1-D factor.
        const double p = 0.84430709621113918;
        CHECK(std::abs(doublewell_positive_mass() - p) <= 1e-12);
        auto t = make_doublewell();
        CHECK(t.dim() == 30);
        const auto& modes = *t.modes();
        CHECK(modes.modes.size() == 8);
        CHECK(modes.modes[0].label == "(+++)");
        CHECK(std::abs(modes.modes[0].weight - 0.60186808987700166) <= 1e-12);
        CHECK(std::abs(modes.modes[0].weight - p * p * p) <= 1e-12);
        CHECK(std::abs(modes.weights().sum() - 1.0) <= 1e-12);

        Eigen::VectorXd x = Eigen::VectorXd::Constant(30, 0.3);
        x[0] = -1.7;
        x[2] = -0.2;
        CHECK(modes.modes[static_cast<std::size_t>(modes.assign(x))].label == "(-+-)");

        Rng rng = make_stream(3, "dw-test");
        for (int k = 0; k < 3; ++k) {
            Eigen::VectorXd y = standard_normal_matrix(rng, 30, 1);
            CHECK(rel_err(t.grad_log_mu(y), fd_grad(t, y, 1e-6)) <= 1e-6);
        }
    }

    TEST_CASE("dual-number Hessian, Laplacian and third derivatives") {
        Rng rng = make_stream(4, "hess-test");
        for (const auto& t : {make_9gaussians(), make_rings(), make_funnel(), make_doublewell()}) {
            Eigen::VectorXd x = 0.7 * standard_normal_matrix(rng, t.dim(), 1);
            if (t.name() == "rings") x = Eigen::Vector2d(3.1, 2.2);
            // Between modes, where the Laplacian is not locally flat.
            if (t.name() == "9gaussians") x = Eigen::Vector2d(2.4, -2.2);
            const Eigen::MatrixXd h = t.hessian_log_mu(x);
            const double hstep = 1e-5;
            Eigen::MatrixXd fdh(t.dim(), t.dim());
            for (int i = 0; i < t.dim(); ++i) {
                Eigen::VectorXd e = Eigen::VectorXd::Unit(t.dim(), i) * hstep;
                fdh.col(i) = (t.grad_log_mu(x + e) - t.grad_log_mu(x - e)) / (2 * hstep);
            }
            INFO(t.name());
            CHECK((h - fdh).norm() / h.norm() <= 1e-6);
            CHECK(std::abs(t.laplacian_log_mu(x) - h.trace()) <= 1e-10 * std::max(1.0, std::abs(h.trace())));
            const Eigen::VectorXd v = rademacher(rng, t.dim());
            CHECK(std::abs(t.hessian_quadratic(x, v) - v.dot(h * v)) <= 1e-9 * std::max(1.0, h.norm()));
            if (t.dim() <= 10) {
                Eigen::VectorXd fdl(t.dim());
                for (int i = 0; i < t.dim(); ++i) {
                    Eigen::VectorXd e = Eigen::VectorXd::Unit(t.dim(), i) * 1e-4;
                    fdl[i] = (t.laplacian_log_mu(x + e) - t.laplacian_log_mu(x - e)) / 2e-4;
                }
                CHECK(rel_err(t.grad_laplacian_log_mu(x), fdl) <= 1e-6);
            }
        }
    }

    TEST_CASE("mog_perturbed endpoints and composition") {
        auto mix = make_9gaussians().oracle().value();
        auto same = mog_perturbed(mix, 0.0);
        CHECK(same.variance == mix.variance);
        for (std::size_t i = 0; i < mix.components(); ++i) CHECK(same.means[i] == mix.means[i]);
        auto end = mog_perturbed(mix, 1.0);
        CHECK(end.variance == 1.0);
        for (const auto& m : end.means) CHECK(m.isZero(0.0));
        CHECK(end.weights == mix.weights);
        for (double t : {0.1, 0.37, 0.9}) {
            CHECK(mog_perturbed(mix, t).variance == (1 - t) * mix.variance + t);
        }
        CHECK_THROWS_AS(mog_perturbed(mix, -0.01), std::invalid_argument);
        CHECK_THROWS_AS(mog_perturbed(mix, 1.01), std::invalid_argument);
    }

    TEST_CASE("mog_perturbed matches forward-process moments") {
        const auto mix = two_mode(0.2, 1.0);
        Rng rng = make_stream(5, "forward-mc");
        const Eigen::Index n = 200000;
        for (double t : {0.05, 0.5, 0.95}) {
            const Eigen::MatrixXd x0 = mog_sample(mix, n, rng);
            const Eigen::MatrixXd z = standard_normal_matrix(rng, n, 2);
            const Eigen::MatrixXd xt = std::sqrt(1 - t) * x0 + std::sqrt(t) * z;
            const auto pt = mog_perturbed(mix, t);
            Eigen::Vector2d mean = Eigen::Vector2d::Zero();
            for (std::size_t i = 0; i < pt.components(); ++i) mean += pt.weights[i] * pt.means[i];
            Eigen::Matrix2d second = pt.variance * Eigen::Matrix2d::Identity();
            for (std::size_t i = 0; i < pt.components(); ++i) second += pt.weights[i] * pt.means[i] * pt.means[i].transpose();
            const Eigen::Matrix2d cov = second - mean * mean.transpose();

            const Eigen::RowVector2d emp_mean = xt.colwise().mean();
            const Eigen::MatrixXd c = xt.rowwise() - emp_mean;
            const Eigen::Matrix2d emp_cov = c.transpose() * c / double(n - 1);
            for (int k = 0; k < 2; ++k) {
                CHECK(std::abs(emp_mean[k] - mean[k]) <= 3 * std::sqrt(cov(k, k) / n));
                // SE of a sample covariance entry: sqrt((S_kk S_ll + S_kl^2)/n) under near-normality is
                // too small for a bimodal law; use the empirical fourth moment instead.
                for (int l = 0; l < 2; ++l) {
                    const Eigen::ArrayXd prod = c.col(k).array() * c.col(l).array();
                    const double se = std::sqrt((prod - prod.mean()).square().mean() / n);
                    CHECK(std::abs(emp_cov(k, l) - cov(k, l)) <= 3 * se);
                }
            }
        }
    }

    TEST_CASE("mog score: single component, finite differences, symmetry") {
        GaussianMixture one;
        one.weights = Eigen::VectorXd::Ones(1);
        one.means = {Eigen::Vector3d(1, -2, 0.5)};
        one.variance = 0.7;
        const Eigen::Vector3d x(0.3, 0.2, -1);
        CHECK(rel_err(mog_score(one, x), Eigen::VectorXd((one.means[0] - x) / 0.7)) <= 1e-14);

        auto mix = make_9gaussians().oracle().value();
        Rng rng = make_stream(6, "score-fd");
        for (int k = 0; k < 10; ++k) {
            Eigen::VectorXd y = 4 * standard_normal_matrix(rng, 2, 1);
            CHECK(rel_err(mog_score(mix, y), fd_grad(mix, y)) <= 1e-6);
        }

        GaussianMixture sym;
        sym.weights = Eigen::Vector2d(0.5, 0.5);
        sym.means = {Eigen::Vector2d(2, 1), Eigen::Vector2d(-2, -1)};
        sym.variance = 1.0;
        CHECK(mog_score(sym, Eigen::Vector2d::Zero()).norm() <= 1e-15);
        // Far from all modes the log-sum-exp keeps everything finite.
        CHECK(std::isfinite(mog_logdensity(mix, Eigen::Vector2d(300, -400))));
        CHECK(mog_score(mix, Eigen::Vector2d(300, -400)).allFinite());
    }

    TEST_CASE("perturbed mixture log density over (x, t)") {
        const auto mix = two_mode(0.2, 1.0);
        const Eigen::Vector3d z(0.4, -1.1, 0.3);
        const auto f = [&](const auto& zz) { return perturbed_mixture_log_density(mix, zz); };
        const auto pt = mog_perturbed(mix, 0.3);
        CHECK(std::abs(autodiff::value(f, z) - mog_logdensity(pt, z.head(2))) <= 1e-13);
        const Eigen::VectorXd g = autodiff::gradient(f, z);
        CHECK(rel_err(Eigen::VectorXd(g.head(2)), mog_score(pt, z.head(2))) <= 1e-12);
        const double h = 1e-6;
        const double dt = (mog_logdensity(mog_perturbed(mix, 0.3 + h), z.head(2)) -
                           mog_logdensity(mog_perturbed(mix, 0.3 - h), z.head(2))) / (2 * h);
        CHECK(rel_err(g[2], dt) <= 1e-6);
    }

    TEST_CASE("mixture validation") {
        auto bad = two_mode(0.3, 1.0);
        bad.weights[0] = 0.31;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        auto neg = two_mode(0.3, -1.0);
        CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
        CHECK_THROWS_AS(make_target("nope"), std::invalid_argument);
        CHECK(make_target("gaussian").dim() == 2);
    }

    TEST_CASE("reference samplers reproduce mode weights") {
        Rng rng = make_stream(7, "reference");
        const Eigen::Index n = 40000;
        for (const auto& t : {make_9gaussians(), make_rings(), make_doublewell()}) {
            const Eigen::MatrixXd s = sample_reference(t, n, rng);
            const auto& modes = *t.modes();
            Eigen::VectorXd counts = Eigen::VectorXd::Zero(modes.modes.size());
            for (Eigen::Index r = 0; r < n; ++r) counts[modes.assign(s.row(r).transpose())] += 1;
            counts /= double(n);
            const Eigen::VectorXd w = modes.weights();
            INFO(t.name());
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                CHECK(std::abs(counts[i] - w[i]) <= 4 * std::sqrt(w[i] * (1 - w[i]) / n));
            }
        }
        const Eigen::MatrixXd f = sample_reference(make_funnel(), n, rng);
        CHECK(std::abs(f.col(0).mean()) <= 4 * 3 / std::sqrt(double(n)));
        CHECK(std::abs(f.col(0).squaredNorm() / n - 9.0) <= 0.3);
    }
}
