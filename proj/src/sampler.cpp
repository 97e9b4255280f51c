#include "dps/sampler.hpp"

#include "dps/diffusion.hpp"
#include "dps/parallel.hpp"
#include "dps/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace dps {

namespace {

constexpr std::int64_t kBlock = 256;

}  // namespace

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("sampler steps must be >= 1");
    if (samples < 1) throw std::invalid_argument("sampler sample count must be >= 1");
    if (!(radius > 0.0)) throw std::invalid_argument("truncation radius must be positive");
    if (!(t_min > 0.0 && t_max < 1.0 && t_min < t_max)) {
        throw std::invalid_argument("sampler times need 0 < t_min < t_max < 1");
    }
}

SamplerConfig SamplerConfig::defaults_for(const std::string& target) {
    SamplerConfig c;
    if (target == "funnel") c.radius = 2000.0;
    else if (target == "doublewell") c.radius = 30.0;
    return c;
}

void SampleSet::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (Eigen::Index j = 0; j < samples.cols(); ++j) os << (j ? "," : "") << 'x' << j;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index j = 0; j < samples.cols(); ++j) os << (j ? "," : "") << samples(i, j);
        os << '\n';
    }
    if (!os) throw std::runtime_error("write to " + path + " failed");
}

void SampleSet::write_sidecar(const std::string& path) const {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["seed"] = seed;
    j["rows"] = samples.rows();
    j["dim"] = samples.cols();
    j["config"] = config_text.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_text);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("write to " + path + " failed");
}

SampleSet SampleSet::read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(is, line) || line.empty()) throw std::runtime_error(path + ": missing header");
    const Eigen::Index d = std::count(line.begin(), line.end(), ',') + 1;
    std::vector<double> vals;
    Eigen::Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        Eigen::Index n = 0;
        while (std::getline(ls, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cell.size() || cell.empty()) {
                throw std::runtime_error(path + ": bad number '" + cell + "' on row " + std::to_string(rows + 1));
            }
            vals.push_back(v);
            ++n;
        }
        if (n != d) throw std::runtime_error(path + ": row " + std::to_string(rows + 1) + " has the wrong width");
        ++rows;
    }
    SampleSet s;
    s.samples = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(vals.data(), rows, d);
    s.method = "file";
    return s;
}

Eigen::VectorXd truncated_score(const LogDensityModel& model, const Eigen::VectorXd& x, double t, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("truncation radius must be positive");
    if (x.norm() > radius) return Eigen::VectorXd::Zero(x.size());
    return model.score(x, t);
}

Eigen::VectorXd reverse_step(const Eigen::VectorXd& x, double t_prev, double h, const Eigen::VectorXd& score,
                             const Eigen::VectorXd& z) {
    const double r = h / t_prev;
    const double a = std::sqrt(1.0 + r);
    return a * x + 2.0 * (a - 1.0) * score + std::sqrt(r) * z;
}

SampleSet sample(const ScoreFn& score, int dim, const SamplerConfig& cfg, const std::string& method) {
    cfg.validate();
    if (dim < 1) throw std::invalid_argument("sampler dimension must be >= 1");
    const int m = cfg.samples;
    const double h = cfg.step_size();

    std::vector<Rng> rngs;
    rngs.reserve(m);
    Eigen::MatrixXd x(dim, m);
    for (int i = 0; i < m; ++i) {
        rngs.push_back(make_stream(cfg.seed, "sample", {static_cast<std::uint64_t>(i)}));
        x.col(i) = standard_normal_matrix(rngs.back(), dim, 1);
    }

    std::vector<Eigen::Index> inside;
    Eigen::MatrixXd s(dim, m), z(dim, m);
    for (int n = 1; n <= cfg.steps; ++n) {
        const double t = cfg.t_min + (n - 1) * h;
        inside.clear();
        for (Eigen::Index i = 0; i < m; ++i) {
            if (x.col(i).norm() <= cfg.radius) inside.push_back(i);
        }
        s.setZero();
        // Fixed-size blocks keep each column's arithmetic independent of the
        // worker count.
        const auto nin = static_cast<std::int64_t>(inside.size());
        parallel_for((nin + kBlock - 1) / kBlock, [&](std::int64_t b) {
            const std::int64_t lo = b * kBlock, hi = std::min(nin, lo + kBlock);
            Eigen::MatrixXd xin(dim, hi - lo);
            for (std::int64_t k = lo; k < hi; ++k) xin.col(k - lo) = x.col(inside[k]);
            const Eigen::MatrixXd sin = score(xin, 1.0 - t);
            for (std::int64_t k = lo; k < hi; ++k) s.col(inside[k]) = sin.col(k - lo);
        });
        parallel_for(m, [&](std::int64_t i) { z.col(i) = standard_normal_matrix(rngs[i], dim, 1); });

        const double r = h / t;
        const double a = std::sqrt(1.0 + r);
        x = a * x + 2.0 * (a - 1.0) * s + std::sqrt(r) * z;
        if (!x.allFinite()) {
            throw SamplingError("sampler produced a non-finite state at step " + std::to_string(n));
        }
    }

    SampleSet out;
    out.samples = x.transpose();
    out.method = method;
    out.seed = cfg.seed;
    nlohmann::ordered_json j;
    j["steps"] = cfg.steps;
    j["samples"] = cfg.samples;
    j["radius"] = cfg.radius;
    j["t_min"] = cfg.t_min;
    j["t_max"] = cfg.t_max;
    out.config_text = j.dump();
    return out;
}

SampleSet sample(const LogDensityModel& model, const SamplerConfig& cfg) {
    return sample([&](const Eigen::MatrixXd& x, double t) { return model.score_batch(x, t); },
                  model.target().dim(), cfg, "dps");
}

SampleSet sample(const ScoreModel& model, const SamplerConfig& cfg) {
    return sample([&](const Eigen::MatrixXd& x, double t) { return model.score_batch(x, t); },
                  model.target().dim(), cfg, "score_fpe");
}

SampleSet lmc_baseline(const TargetDistribution& target, double step, int iterations, int chains,
                       std::uint64_t seed) {
    if (!(step > 0.0)) throw std::invalid_argument("lmc baseline step size must be positive");
    LmcConfig cfg{step, iterations, chains, 1};
    LmcHooks hooks;
    hooks.tag = "baseline";
    SampleSet out;
    out.samples = lmc_chain(target, cfg, seed, 0, hooks).transpose();
    out.method = "lmc";
    out.seed = seed;
    nlohmann::ordered_json j;
    j["target"] = target.name();
    j["step"] = step;
    j["iterations"] = iterations;
    j["chains"] = chains;
    out.config_text = j.dump();
    return out;
}

}  // namespace dps
