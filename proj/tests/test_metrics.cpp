#include "dps/metrics.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace dps;

namespace {

Eigen::MatrixXd normal_rows(std::uint64_t seed, std::string_view tag, Eigen::Index n, int d, double shift = 0.0) {
    Rng rng = make_stream(seed, tag);
    return (standard_normal_matrix(rng, d, n).array() + shift).matrix().transpose();
}

GaussianMixture two_mode() {
    GaussianMixture mix;
    mix.weights = Eigen::Vector2d(0.2, 0.8);
    mix.means = {Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5)};
    mix.variance = 1.0;
    return mix;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("knn KL recovers the Gaussian shift divergence") {
        // KL(N(0,1) || N(1,1)) = 1/2.
        const auto p = normal_rows(1, "p", 5000, 1);
        const auto q = normal_rows(1, "q", 5000, 1, 1.0);
        CHECK(std::abs(knn_kl(p, q) - 0.5) <= 0.1);
        // d = 2 with shift (1, 1): KL = 1.
        const auto p2 = normal_rows(2, "p", 3000, 2);
        const auto q2 = normal_rows(2, "q", 3000, 2, 1.0);
        CHECK(std::abs(knn_kl(p2, q2) - 1.0) <= 0.15);
    }

    TEST_CASE("knn KL of identical laws concentrates at zero") {
        double worst1000 = 0.0, worst5000 = 0.0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            worst1000 = std::max(worst1000, std::abs(knn_kl(normal_rows(seed, "a", 1000, 2), normal_rows(seed, "b", 1000, 2))));
            worst5000 = std::max(worst5000, std::abs(knn_kl(normal_rows(seed, "a", 5000, 2), normal_rows(seed, "b", 5000, 2))));
        }
        CHECK(worst1000 <= 0.1);
        CHECK(worst5000 <= 0.05);
    }

    TEST_CASE("knn KL is permutation invariant") {
        const auto p = normal_rows(3, "p", 400, 2);
        const auto q = normal_rows(3, "q", 300, 2, 0.5);
        std::vector<int> ip(400), iq(300);
        std::iota(ip.begin(), ip.end(), 0);
        std::iota(iq.begin(), iq.end(), 0);
        std::reverse(ip.begin(), ip.end());
        std::rotate(iq.begin(), iq.begin() + 111, iq.end());
        Eigen::MatrixXd pp(400, 2), qq(300, 2);
        for (int i = 0; i < 400; ++i) pp.row(i) = p.row(ip[i]);
        for (int i = 0; i < 300; ++i) qq.row(i) = q.row(iq[i]);
        CHECK(std::abs(knn_kl(pp, qq) - knn_kl(p, q)) <= 1e-12);
    }

    TEST_CASE("knn KL duplicates and preconditions") {
        Eigen::MatrixXd p = normal_rows(4, "p", 50, 2);
        for (int i = 0; i < 10; ++i) p.row(10 + i) = p.row(0);
        const auto r = knn_kl_detail(p, normal_rows(4, "q", 50, 2));
        CHECK(r.zero_distances > 0);
        CHECK(std::isfinite(r.estimate));
        CHECK_THROWS_AS(knn_kl(normal_rows(1, "p", 5, 2), normal_rows(1, "q", 50, 2)), std::invalid_argument);
        CHECK_THROWS_AS(knn_kl(normal_rows(1, "p", 50, 2), normal_rows(1, "q", 50, 3)), std::invalid_argument);
        CHECK_THROWS_AS(knn_kl(normal_rows(1, "p", 50, 2), normal_rows(1, "q", 50, 2), 0), std::invalid_argument);
    }

    TEST_CASE("projection dimensions") {
        CHECK(kl_projection_dims("funnel", 10) == 2);
        CHECK(kl_projection_dims("doublewell", 30) == 5);
        CHECK(kl_projection_dims("9gaussians", 2) == 2);
        CHECK(kl_projection_dims("rings", 2) == 2);
    }

    TEST_CASE("mixing error") {
        const auto target = make_9gaussians();
        const auto& modes = *target.modes();
        const int counts[9] = {200, 40, 200, 40, 40, 40, 200, 40, 200};
        Eigen::MatrixXd s(1000, 2);
        int row = 0;
        for (int m = 0; m < 9; ++m) {
            for (int c = 0; c < counts[m]; ++c) s.row(row++) = modes.modes[m].center.transpose();
        }
        CHECK(mixing_error(s, modes) <= 1e-15);
        Eigen::MatrixXd flipped = s.colwise().reverse();
        CHECK(mixing_error(flipped, modes) == mixing_error(s, modes));

        const auto two = make_mixture_target("mog", two_mode());
        const Eigen::MatrixXd one = Eigen::RowVector2d(-5, -5).replicate(100, 1);
        CHECK(mixing_error(one, *two.modes()) == doctest::Approx(std::sqrt(1.28)).epsilon(1e-14));
        CHECK_THROWS_AS(mixing_error(Eigen::MatrixXd(0, 2), *two.modes()), std::invalid_argument);
    }

    TEST_CASE("score error against the perturbed mixture") {
        const auto mix = two_mode();
        const auto target = make_mixture_target("mog", mix);
        Rng rng = make_stream(5, "eval");
        for (double t : {0.0, 0.3, 0.9}) {
            const Eigen::MatrixXd eval = perturbed_eval_samples(target, t, 200, rng);
            CHECK(score_l2_error(LogDensityModel::analytic(target, mog_exact_field(mix)), t, eval) <= 1e-12);
            CHECK(score_l2_error(ScoreModel::analytic(target, mog_exact_score(mix)), t, eval) <= 1e-12);
            const LogDensityModel random(target, nn::init_network(2, 7));
            // At t = 0 every model reduces to log mu exactly.
            if (t > 0.0) CHECK(score_l2_error(random, t, eval) > 1e-3);
            else CHECK(score_l2_error(random, t, eval) <= 1e-20);
        }
        const LogDensityModel funnel(make_funnel(), nn::init_network(10, 1));
        CHECK_THROWS_AS(score_l2_error(funnel, 0.5, Eigen::MatrixXd::Zero(3, 10)), UnsupportedTargetError);
    }

    TEST_CASE("report json and csv") {
        const auto dir = std::filesystem::temp_directory_path() / "dps_metrics_test";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        MetricsReport r;
        r.target = "9gaussians";
        r.method = "dps";
        r.seed = 3;
        r.samples = 1000;
        r.kl_dims = 2;
        r.mixing_l2 = 0.01;
        const auto j = nlohmann::json::parse(r.to_json());
        CHECK(j["mixing_l2"] == 0.01);
        CHECK(j["kl_estimate"].is_null());
        const auto path = (dir / "results.csv").string();
        r.append_csv(path);
        r.seed = 4;
        r.append_csv(path);
        std::ifstream is(path);
        std::string line;
        int n = 0;
        while (std::getline(is, line)) ++n;
        CHECK(n == 3);
        std::filesystem::remove_all(dir);
    }
}
