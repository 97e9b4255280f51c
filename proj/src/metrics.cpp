#include "dps/metrics.hpp"

#include "dps/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

namespace dps {

namespace {

constexpr double kJitter = 1e-12;

// k-th smallest distance from column `self` of a to the columns of b,
// skipping column `skip` of b (pass -1 to keep all).
double kth_distance(const Eigen::MatrixXd& a, Eigen::Index self, const Eigen::MatrixXd& b, Eigen::Index skip, int k,
                    std::vector<double>& buf) {
    buf.clear();
    const auto x = a.col(self);
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        if (j == skip) continue;
        buf.push_back((b.col(j) - x).squaredNorm());
    }
    std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end());
    return std::sqrt(buf[k - 1]);
}

std::string fmt(std::optional<double> v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

}  // namespace

KnnKl knn_kl_detail(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int k) {
    if (k < 1) throw std::invalid_argument("knn_kl needs k >= 1");
    if (p.cols() != q.cols()) throw std::invalid_argument("knn_kl sample sets differ in dimension");
    const Eigen::Index n = p.rows(), m = q.rows();
    if (n <= k || m <= k) throw std::invalid_argument("knn_kl needs more than k samples in each set");
    const double d = static_cast<double>(p.cols());
    const Eigen::MatrixXd pt = p.transpose(), qt = q.transpose();

    std::vector<double> terms(static_cast<std::size_t>(n));
    std::vector<int> zeros(static_cast<std::size_t>(n), 0);
    parallel_for(n, [&](std::int64_t i) {
        thread_local std::vector<double> buf;
        double rho = kth_distance(pt, i, pt, i, k, buf);
        double nu = kth_distance(pt, i, qt, -1, k, buf);
        if (rho == 0.0) {
            rho = kJitter;
            ++zeros[i];
        }
        if (nu == 0.0) {
            nu = kJitter;
            ++zeros[i];
        }
        terms[i] = std::log(nu / rho);
    });
    KnnKl out;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        sum += terms[i];
        out.zero_distances += zeros[i];
    }
    out.estimate = d / n * sum + std::log(static_cast<double>(m) / static_cast<double>(n - 1));
    return out;
}

double knn_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int k) {
    const KnnKl r = knn_kl_detail(p, q, k);
    if (r.zero_distances > 0) {
        std::cerr << "warning: knn_kl replaced " << r.zero_distances << " zero neighbour distances by 1e-12\n";
    }
    return r.estimate;
}

int kl_projection_dims(const std::string& target, int dim) {
    if (target == "funnel") return std::min(dim, 2);
    if (target == "doublewell") return std::min(dim, 5);
    return dim;
}

Eigen::VectorXd mode_proportions(const Eigen::MatrixXd& samples, const ModeSet& modes) {
    if (samples.rows() == 0) throw std::invalid_argument("mode proportions of an empty sample set");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(modes.modes.size()));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) w[modes.assign(samples.row(i).transpose())] += 1.0;
    return w / static_cast<double>(samples.rows());
}

double mixing_error(const Eigen::MatrixXd& samples, const ModeSet& modes) {
    return (mode_proportions(samples, modes) - modes.weights()).norm();
}

namespace {

template <typename Model>
double score_error_impl(const Model& model, double t, const Eigen::MatrixXd& eval) {
    const auto& oracle = model.target().oracle();
    if (!oracle) throw UnsupportedTargetError("score error needs a mixture oracle; '" + model.target().name() + "' has none");
    if (eval.rows() == 0) throw std::invalid_argument("score error needs evaluation points");
    if (eval.cols() != model.target().dim()) throw std::invalid_argument("evaluation points have the wrong dimension");
    const GaussianMixture pt = mog_perturbed(*oracle, t);
    const Eigen::MatrixXd s = model.score_batch(eval.transpose(), t);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < eval.rows(); ++i) {
        acc += (s.col(i) - mog_score(pt, eval.row(i).transpose())).squaredNorm();
    }
    return acc / static_cast<double>(eval.rows());
}

}  // namespace

double score_l2_error(const LogDensityModel& model, double t, const Eigen::MatrixXd& eval) {
    return score_error_impl(model, t, eval);
}

double score_l2_error(const ScoreModel& model, double t, const Eigen::MatrixXd& eval) {
    return score_error_impl(model, t, eval);
}

Eigen::MatrixXd perturbed_eval_samples(const TargetDistribution& target, double t, Eigen::Index n, Rng& rng) {
    if (!target.oracle()) throw UnsupportedTargetError("'" + target.name() + "' has no mixture oracle");
    return mog_sample(mog_perturbed(*target.oracle(), t), n, rng);
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["target"] = target;
    j["method"] = method;
    j["seed"] = seed;
    j["samples"] = samples;
    j["reference_samples"] = reference_samples;
    j["k"] = k;
    j["kl_dims"] = kl_dims;
    j["kl_estimate"] = kl_estimate ? nlohmann::json(*kl_estimate) : nlohmann::json();
    j["mixing_l2"] = mixing_l2 ? nlohmann::json(*mixing_l2) : nlohmann::json();
    j["score_l2"] = score_l2 ? nlohmann::json(*score_l2) : nlohmann::json();
    return j.dump(2);
}

void MetricsReport::append_csv(const std::string& path) const {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot append to " + path);
    if (fresh) os << "target,method,seed,samples,k,kl_dims,kl_estimate,mixing_l2,score_l2\n";
    os << target << ',' << method << ',' << seed << ',' << samples << ',' << k << ',' << kl_dims << ','
       << fmt(kl_estimate) << ',' << fmt(mixing_l2) << ',' << fmt(score_l2) << '\n';
    if (!os) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace dps
