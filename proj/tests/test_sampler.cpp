#include "dps/diffusion.hpp"
#include "dps/sampler.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace dps;

namespace {

ScoreFn exact_gaussian_score() {
    return [](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd { return -x; };
}

void check_standard_normal(const Eigen::MatrixXd& s, double tol) {
    const Eigen::RowVectorXd mean = s.colwise().mean();
    const Eigen::MatrixXd c = s.rowwise() - mean;
    const Eigen::MatrixXd cov = c.transpose() * c / double(s.rows() - 1);
    INFO("mean " << mean << "\ncov\n" << cov);
    CHECK(mean.cwiseAbs().maxCoeff() <= tol);
    CHECK((cov - Eigen::MatrixXd::Identity(s.cols(), s.cols())).cwiseAbs().maxCoeff() <= tol);
}

}  // namespace

TEST_SUITE("sampler") {
    TEST_CASE("config validation and radii") {
        CHECK(SamplerConfig::defaults_for("9gaussians").radius == 20.0);
        CHECK(SamplerConfig::defaults_for("rings").radius == 20.0);
        CHECK(SamplerConfig::defaults_for("funnel").radius == 2000.0);
        CHECK(SamplerConfig::defaults_for("doublewell").radius == 30.0);
        SamplerConfig c;
        CHECK(c.steps == 1000);
        CHECK(c.step_size() == doctest::Approx(0.998 / 1000).epsilon(1e-15));
        c.steps = 0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = {};
        c.radius = 0.0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }

    TEST_CASE("truncated score uses a closed ball") {
        const auto model = LogDensityModel::analytic(make_gaussian(2), gaussian_exact_field());
        const Eigen::Vector2d in(0.6, -0.8);
        CHECK(truncated_score(model, in, 0.3, 20.0) == -in);
        const Eigen::Vector2d edge(3.0, 4.0);
        CHECK(truncated_score(model, edge, 0.3, 5.0) == -edge);
        CHECK(truncated_score(model, edge, 0.3, 4.0).isZero(0.0));
        CHECK_THROWS_AS(truncated_score(model, edge, 0.3, -1.0), std::invalid_argument);
    }

    TEST_CASE("reverse step formula") {
        const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
        CHECK(reverse_step(Eigen::Vector2d(1, 0), 0.1, 0.3, zero, zero).isApprox(Eigen::Vector2d(2, 0), 1e-15));
        const Eigen::Vector2d e1(1, 0);
        CHECK(reverse_step(zero, 0.4, 0.1, zero, e1).isApprox(std::sqrt(0.25) * e1, 1e-15));

        // Affine in (x, s, z) with the stated coefficients.
        const Eigen::Vector2d x(0.3, -1.2), s(2.0, 0.5), z(-0.7, 0.9);
        const double t = 0.2, h = 0.05;
        const Eigen::VectorXd sum = reverse_step(x, t, h, zero, zero) + reverse_step(zero, t, h, s, zero) +
                                    reverse_step(zero, t, h, zero, z);
        CHECK((reverse_step(x, t, h, s, z) - sum).norm() <= 1e-14);
        const double a = std::sqrt(1.25);
        CHECK((reverse_step(zero, t, h, s, zero) - 2 * (a - 1) * s).norm() <= 1e-15);

        // Small-step limit: x + (h / 2t)(x + 2s) up to O(h^2).
        std::vector<double> ratio;
        for (double hh : {1e-3, 1e-4, 1e-5}) {
            const Eigen::VectorXd lin = x + hh / (2 * t) * (x + 2 * s);
            ratio.push_back((reverse_step(x, t, hh, s, zero) - lin).norm() / (hh * hh));
        }
        // Leading term -(h/t)^2 (x + 2s) / 8.
        const double c = (x + 2 * s).norm() / (8 * t * t);
        for (double r : ratio) CHECK(r == doctest::Approx(c).epsilon(0.02));
    }

    TEST_CASE("exact Gaussian score preserves N(0, I)") {
        SamplerConfig cfg;
        cfg.samples = 10000;
        cfg.seed = 3;
        check_standard_normal(sample(exact_gaussian_score(), 2, cfg).samples, 0.05);
    }

    TEST_CASE("coarse grid matches the exact variance recursion") {
        // With s = -x each step maps the variance v to (2 - a)^2 v + r, so the
        // grid bias is known exactly; at N = 100 it is about 0.09.
        SamplerConfig cfg;
        cfg.samples = 20000;
        cfg.steps = 100;
        cfg.seed = 6;
        double v = 1.0;
        for (int n = 1; n <= cfg.steps; ++n) {
            const double r = cfg.step_size() / (cfg.t_min + (n - 1) * cfg.step_size());
            const double a = std::sqrt(1 + r);
            v = (2 - a) * (2 - a) * v + r;
        }
        CHECK(v == doctest::Approx(1.0913).epsilon(1e-3));
        const Eigen::MatrixXd s = sample(exact_gaussian_score(), 2, cfg).samples;
        for (int k = 0; k < 2; ++k) {
            CHECK(std::abs(s.col(k).mean()) <= 4 * std::sqrt(v / cfg.samples));
            const double var = (s.col(k).array() - s.col(k).mean()).square().mean();
            CHECK(std::abs(var - v) <= 4 * std::sqrt(2.0 / cfg.samples) * v);
        }
    }

    TEST_CASE("one step moments") {
        SamplerConfig cfg;
        cfg.samples = 20000;
        cfg.steps = 1;
        cfg.seed = 4;
        const Eigen::MatrixXd s = sample(exact_gaussian_score(), 2, cfg).samples;
        // x1 = (2 - a) x0 + sqrt(r) z with s = -x0, r = h / T_min.
        const double r = cfg.step_size() / cfg.t_min;
        const double a = std::sqrt(1 + r);
        const double var = (2 - a) * (2 - a) + r;
        const Eigen::RowVectorXd mean = s.colwise().mean();
        for (int k = 0; k < 2; ++k) {
            CHECK(std::abs(mean[k]) <= 4 * std::sqrt(var / cfg.samples));
            const double v = (s.col(k).array() - mean[k]).square().mean();
            CHECK(std::abs(v - var) <= 4 * std::sqrt(2.0 / cfg.samples) * var);
        }
    }

    TEST_CASE("per-chain streams: deterministic and independent of batch size") {
        SamplerConfig cfg;
        cfg.samples = 20;
        cfg.steps = 50;
        cfg.seed = 9;
        const auto a = sample(exact_gaussian_score(), 3, cfg);
        const auto b = sample(exact_gaussian_score(), 3, cfg);
        CHECK(a.samples == b.samples);
        cfg.samples = 7;
        CHECK(sample(exact_gaussian_score(), 3, cfg).samples == a.samples.topRows(7));
        cfg.seed = 10;
        CHECK(sample(exact_gaussian_score(), 3, cfg).samples != a.samples.topRows(7));
    }

    TEST_CASE("no score evaluation outside the ball") {
        SamplerConfig cfg;
        cfg.samples = 500;
        cfg.steps = 40;
        cfg.radius = 0.8;
        bool outside = false;
        int calls = 0;
        ScoreFn probe = [&](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd {
            ++calls;
            for (Eigen::Index i = 0; i < x.cols(); ++i) outside |= x.col(i).norm() > cfg.radius;
            return -x;
        };
        const auto out = sample(probe, 2, cfg);
        CHECK(calls > 0);
        CHECK_FALSE(outside);
        CHECK(out.samples.allFinite());

        // A score that would be catastrophic if used outside the ball changes nothing there.
        cfg.radius = 1e-9;
        ScoreFn huge = [](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd {
            return Eigen::MatrixXd::Constant(x.rows(), x.cols(), 1e300);
        };
        ScoreFn none = [](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd {
            return Eigen::MatrixXd::Zero(x.rows(), x.cols());
        };
        CHECK(sample(huge, 2, cfg).samples == sample(none, 2, cfg).samples);
    }

    TEST_CASE("non-finite state names the step") {
        SamplerConfig cfg;
        cfg.samples = 4;
        cfg.steps = 10;
        int calls = 0;
        ScoreFn bad = [&](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd {
            ++calls;
            if (calls < 3) return -x;
            return Eigen::MatrixXd::Constant(x.rows(), x.cols(), std::numeric_limits<double>::quiet_NaN());
        };
        try {
            sample(bad, 2, cfg);
            FAIL("expected SamplingError");
        } catch (const SamplingError& e) {
            CHECK(std::string(e.what()).find("step 3") != std::string::npos);
        }
    }

    TEST_CASE("log-density and score models plug into the sampler") {
        SamplerConfig cfg;
        cfg.samples = 3000;
        const auto ld = sample(LogDensityModel::analytic(make_gaussian(2), gaussian_exact_field()), cfg);
        CHECK(ld.method == "dps");
        check_standard_normal(ld.samples, 0.1);

        GaussianMixture mix;
        mix.weights = Eigen::Vector2d(0.2, 0.8);
        mix.means = {Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5)};
        mix.variance = 1.0;
        const auto target = make_mixture_target("mog", mix);
        const auto sf = sample(ScoreModel::analytic(target, mog_exact_score(mix)), cfg);
        CHECK(sf.method == "score_fpe");
        // The exact score of the perturbed mixture recovers the weights.
        const double upper = (sf.samples.rowwise().sum().array() > 0).cast<double>().mean();
        CHECK(std::abs(upper - 0.8) <= 4 * std::sqrt(0.16 / cfg.samples) + 0.01);
    }

    TEST_CASE("lmc baseline stationary variance") {
        // Under x' = (1 - eta/2) x + sqrt(eta) xi the N(0,1) chain has
        // stationary variance 1 / (1 - eta/4).
        const double eta = 0.01;
        const auto s = lmc_baseline(make_gaussian(1), eta, 2000, 10000, 5);
        CHECK(s.method == "lmc");
        const double mean = s.samples.mean();
        const double var = (s.samples.array() - mean).square().mean();
        CHECK(std::abs(mean) <= 0.05);
        CHECK(std::abs(var - 1.0 / (1.0 - eta / 4)) <= 0.05 / (1.0 - eta / 4));
        CHECK_THROWS_AS(lmc_baseline(make_gaussian(1), 0.0, 10, 10, 1), std::invalid_argument);
        CHECK(lmc_baseline(make_gaussian(2), 0.1, 30, 8, 2).samples ==
              lmc_baseline(make_gaussian(2), 0.1, 30, 8, 2).samples);
        try {
            lmc_baseline(make_doublewell(), 50.0, 200, 3, 1);
            FAIL("expected divergence");
        } catch (const DivergedChainError& e) {
            CHECK(std::string(e.what()).find("chain 0") != std::string::npos);
        }
    }

    TEST_CASE("csv and sidecar round trip") {
        const auto dir = std::filesystem::temp_directory_path() / "dps_sampler_test";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        SamplerConfig cfg;
        cfg.samples = 50;
        cfg.steps = 10;
        const auto s = sample(exact_gaussian_score(), 3, cfg);
        s.write_csv((dir / "s.csv").string());
        s.write_sidecar((dir / "s.json").string());
        const auto back = SampleSet::read_csv((dir / "s.csv").string());
        CHECK(back.samples == s.samples);
        std::ifstream js(dir / "s.json");
        const auto j = nlohmann::json::parse(js);
        CHECK(j["rows"] == 50);
        CHECK(j["dim"] == 3);
        CHECK(j["config"]["steps"] == 10);
        {
            std::ofstream bad(dir / "bad.csv");
            bad << "x0,x1\n1,2\n3\n";
        }
        CHECK_THROWS_AS(SampleSet::read_csv((dir / "bad.csv").string()), std::runtime_error);
        std::filesystem::remove_all(dir);
    }
}
