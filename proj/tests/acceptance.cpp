// Acceptance suite: one PASS/FAIL line per criterion.
//
//   dps_acceptance [--workdir DIR] [N ...]
//
// With no numbers every criterion runs. Criteria 7 and 8 train real models
// through the command layer (tens of minutes each); their run directories go
// under the work directory.

#include "commands.hpp"

#include "dps/model.hpp"
#include "dps/parallel.hpp"
#include "dps/sampler.hpp"
#include "dps/theory.hpp"
#include "dps/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace dps;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
};

fs::path g_workdir;

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(3) << v;
    return os.str();
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

fs::path fresh(const std::string& name) {
    const fs::path p = g_workdir / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

nn::NetworkParams random_network(int d, std::uint64_t seed) {
    nn::Architecture a;
    a.input_dim = d;
    a.hidden = 32;
    a.embedding.dim = 16;
    nn::NetworkParams p = nn::init_network(a, seed);
    Rng rng = make_stream(seed, "acceptance-bias");
    p.for_each_layer([&](const std::string&, nn::DenseLayer& l) {
        l.bias = 0.1 * standard_normal_matrix(rng, static_cast<int>(l.bias.size()), 1);
    });
    return p;
}

// Criterion 1 -----------------------------------------------------------------

Outcome differentiation() {
    double first = 0.0, second = 0.0, param_u = 0.0, param_loss = 0.0;
    for (int d : {2, 10, 30}) {
        const nn::NetworkParams p = random_network(d, 100 + d);
        const TargetDistribution target = make_gaussian(d);
        Rng rng = make_stream(d, "acceptance-points");
        std::uniform_real_distribution<double> ut(0.05, 0.95);
        const Eigen::VectorXd flat = p.flatten();

        // One weight and one bias coordinate from every layer.
        std::vector<std::pair<Eigen::Index, Eigen::Index>> layer_spans;
        {
            Eigen::Index offset = 0;
            p.for_each_layer([&](const std::string&, const nn::DenseLayer& l) {
                layer_spans.emplace_back(offset, l.weight.size());
                offset += l.weight.size();
                layer_spans.emplace_back(offset, l.bias.size());
                offset += l.bias.size();
            });
        }

        for (int k = 0; k < 100; ++k) {
            const Eigen::VectorXd x = standard_normal_matrix(rng, d, 1);
            const double t = ut(rng);
            const auto f = [&](const Eigen::VectorXd& y, double s) { return nn::nn_eval(p, y, s); };

            // First input derivatives.
            const nn::EvalRecord r = nn::nn_derivatives(p, x, t);
            Eigen::VectorXd fd_grad(d);
            for (int i = 0; i < d; ++i) {
                const Eigen::VectorXd e = 1e-4 * Eigen::VectorXd::Unit(d, i);
                fd_grad[i] = (f(x + e, t) - f(x - e, t)) / 2e-4;
            }
            const double ht = 1e-7;
            const double fd_dt = (f(x, t + ht) - f(x, t - ht)) / (2 * ht);
            first = std::max({first, rel_err(r.grad_x, fd_grad), std::abs(r.dt - fd_dt) / std::max(std::abs(fd_dt), 1e-12)});

            // Every second input derivative.
            nn::JetRequest req = nn::JetRequest::axes(d, 1, false, false);
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) req.second_order.emplace_back(i, j);
            const nn::NetworkJet jet(p, x, Eigen::VectorXd::Constant(1, t), req);
            Eigen::VectorXd exact_h(req.second_order.size()), fd_h(req.second_order.size());
            const double h = 1e-3, u0 = f(x, t);
            for (std::size_t q = 0; q < req.second_order.size(); ++q) {
                const auto [i, j] = req.second_order[q];
                exact_h[static_cast<Eigen::Index>(q)] = jet.second_order(static_cast<int>(q))(0, 0);
                const Eigen::VectorXd ei = h * Eigen::VectorXd::Unit(d, i), ej = h * Eigen::VectorXd::Unit(d, j);
                fd_h[static_cast<Eigen::Index>(q)] =
                    i == j ? (f(x + ei, t) - 2 * u0 + f(x - ei, t)) / (h * h)
                           : (f(x + ei + ej, t) - f(x + ei - ej, t) - f(x - ei + ej, t) + f(x - ei - ej, t)) / (4 * h * h);
            }
            second = std::max(second, rel_err(exact_h, fd_h));

            // Parameter gradients of the output and of the training loss at this point.
            CollocationBatch b;
            b.x0 = x;
            b.xt = x;
            b.t = Eigen::VectorXd::Constant(1, t);
            const LogDensityModel model(target, p);
            const Eigen::VectorXd g_loss = exact_gradient(model, b, 0.0, {}).grad.flatten();
            nn::JetCotangent ct;
            ct.value = Eigen::MatrixXd::Ones(1, 1);
            const Eigen::VectorXd g_u = nn::NetworkJet(p, x, b.t, {}).backward(ct).flatten();
            Eigen::VectorXd ours_u(layer_spans.size()), fd_u(layer_spans.size());
            Eigen::VectorXd ours_l(layer_spans.size()), fd_l(layer_spans.size());
            nn::NetworkParams q = p;
            for (std::size_t s = 0; s < layer_spans.size(); ++s) {
                std::uniform_int_distribution<Eigen::Index> pick(0, layer_spans[s].second - 1);
                const Eigen::Index idx = layer_spans[s].first + pick(rng);
                const double hp = 1e-5;
                Eigen::VectorXd plus = flat, minus = flat;
                plus[idx] += hp;
                minus[idx] -= hp;
                q.assign(plus);
                const double up = nn::nn_eval(q, x, t);
                const double lp = loss_batch(LogDensityModel(target, q), b, 0.0, {}).total();
                q.assign(minus);
                const double um = nn::nn_eval(q, x, t);
                const double lm = loss_batch(LogDensityModel(target, q), b, 0.0, {}).total();
                const auto s_ = static_cast<Eigen::Index>(s);
                ours_u[s_] = g_u[idx];
                fd_u[s_] = (up - um) / (2 * hp);
                ours_l[s_] = g_loss[idx];
                fd_l[s_] = (lp - lm) / (2 * hp);
            }
            param_u = std::max(param_u, rel_err(ours_u, fd_u));
            param_loss = std::max(param_loss, rel_err(ours_l, fd_l));
        }
    }
    const bool pass = first <= 1e-5 && param_u <= 1e-5 && second <= 1e-4 && param_loss <= 1e-4;
    return {pass, "worst rel. error: input 1st " + fmt(first) + ", input 2nd " + fmt(second) + ", d(u)/d(theta) " +
                      fmt(param_u) + ", d(loss)/d(theta) " + fmt(param_loss) + " (limits 1e-5 / 1e-4)"};
}

// Criterion 2 -----------------------------------------------------------------

GaussianMixture two_mode(double w1) {
    GaussianMixture m;
    m.weights = Eigen::Vector2d(w1, 1.0 - w1);
    m.means = {Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5)};
    m.variance = 1.0;
    return m;
}

Outcome exact_residual() {
    std::uniform_real_distribution<double> ut(1e-3, 0.999);
    double gauss = 0.0, mog = 0.0;
    for (int d : {2, 10}) {
        const auto m = LogDensityModel::analytic(make_gaussian(d), gaussian_exact_field());
        Rng rng = make_stream(d, "acceptance-gauss-residual");
        for (int k = 0; k < 100; ++k) {
            const Eigen::VectorXd x = 3 * standard_normal_matrix(rng, d, 1);
            gauss = std::max(gauss, std::abs(residual(m, x, ut(rng))));
        }
    }
    const GaussianMixture mix = two_mode(0.2);
    const auto m = LogDensityModel::analytic(make_mixture_target("two_mode", mix), mog_exact_field(mix));
    Rng rng = make_stream(2, "acceptance-mog-residual");
    std::uniform_real_distribution<double> ux(-8.0, 8.0);
    for (int k = 0; k < 100; ++k) {
        const Eigen::Vector2d x(ux(rng), ux(rng));
        mog = std::max(mog, std::abs(residual(m, x, ut(rng))));
    }
    return {gauss <= 1e-10 && mog <= 1e-8,
            "max |residual|: Gaussian " + fmt(gauss) + " (limit 1e-10), two-mode mixture " + fmt(mog) + " (limit 1e-8)"};
}

// Criterion 3 -----------------------------------------------------------------

Outcome hutchinson() {
    const TargetDistribution target = make_9gaussians();
    const LogDensityModel m(target, random_network(2, 3));
    Rng rng = make_stream(3, "acceptance-hutchinson");
    CollocationBatch b = make_collocation(2.0 * standard_normal_matrix(rng, 2, 16), ForwardProcess{}, 3, 0, {true, std::nullopt});
    const Eigen::MatrixXd prior = standard_normal_matrix(rng, 2, 8);
    const Eigen::VectorXd exact = exact_gradient(m, b, 0.5, prior).grad.flatten();
    // Each row's estimate depends only on its own probes, so sharing one sign
    // pattern across rows enumerates every per-row pattern.
    const Eigen::Vector2d signs[4] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(exact.size());
    for (const auto& s1 : signs) {
        for (const auto& s2 : signs) {
            b.v1 = s1.replicate(1, b.size());
            b.v2 = s2.replicate(1, b.size());
            avg += unbiased_gradient(m, b, 0.5, prior).grad.flatten() / 16.0;
        }
    }
    const double abs_err = (avg - exact).cwiseAbs().maxCoeff();
    const double rel = rel_err(avg, exact);
    return {abs_err <= 1e-10 && rel <= 1e-10,
            "16-pattern average vs exact gradient: max abs diff " + fmt(abs_err) + ", rel " + fmt(rel) + " (limit 1e-10)"};
}

// Criterion 4 -----------------------------------------------------------------

MogPair example_pair(double w1, double wt1) {
    MogPair p;
    p.a1 = Eigen::Vector2d(-5, -5);
    p.a2 = Eigen::Vector2d(5, 5);
    p.w = Eigen::Vector2d(w1, 1 - w1);
    p.w_tilde = Eigen::Vector2d(wt1, 1 - wt1);
    return p;
}

Outcome indistinguishability() {
    double worst = 0.0;
    Rng rng = make_stream(4, "acceptance-score-points");
    std::uniform_real_distribution<double> ux(-8.0, 8.0), ut(0.0, 0.95);
    for (double w1 : {0.5, 0.2}) {
        const AnalyticScore s = mog_exact_score(two_mode(w1));
        for (int k = 0; k < 100; ++k) {
            const Eigen::Vector2d x(ux(rng), ux(rng));
            worst = std::max(worst, score_fpe_residual(s, x, ut(rng)).norm());
        }
    }
    const MogPair pair = example_pair(0.5, 0.2);
    const double gap = logdensity_gap(pair, 0.0).value;
    const double fisher = numeric_fisher(pair, 0.0).value;
    return {worst <= 1e-6 && gap > 0.1 && fisher < 0.01,
            "max score-equation residual " + fmt(worst) + " (limit 1e-6), log-density gap " + fmt(gap) +
                " (> 0.1), Fisher divergence " + fmt(fisher) + " (< 0.01)"};
}

// Criterion 5 -----------------------------------------------------------------

Outcome bounds() {
    Rng rng = make_stream(5, "acceptance-pairs");
    int kl_ok = 0, fisher_ok = 0;
    double kl_margin = INFINITY, fisher_margin = INFINITY;
    for (int i = 0; i < 20; ++i) {
        const MogPair p = random_separated_pair(rng);
        const double kb = kl_lower_bound(p), kn = numeric_kl(p, 0.0).value;
        const double fb = fisher_upper_bound(p), fn = numeric_fisher(p, 0.0).value;
        kl_ok += kb <= kn;
        fisher_ok += fb >= fn;
        kl_margin = std::min(kl_margin, kn - kb);
        fisher_margin = std::min(fisher_margin, fb - fn);
    }
    return {kl_ok == 20 && fisher_ok == 20, "KL lower bound holds " + std::to_string(kl_ok) +
                                                "/20 (min margin " + fmt(kl_margin) + "), Fisher upper bound holds " +
                                                std::to_string(fisher_ok) + "/20 (min margin " + fmt(fisher_margin) + ")"};
}

// Criterion 6 -----------------------------------------------------------------

Outcome exact_sampler() {
    SamplerConfig cfg;
    cfg.steps = 1000;
    cfg.samples = 10000;
    cfg.radius = 20.0;
    cfg.seed = 6;
    const ScoreFn score = [](const Eigen::MatrixXd& x, double) -> Eigen::MatrixXd { return -x; };
    const Eigen::MatrixXd s = sample(score, 2, cfg).samples;
    const Eigen::RowVectorXd mean = s.colwise().mean();
    const Eigen::MatrixXd centered = s.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(s.rows() - 1);
    const double mean_err = mean.cwiseAbs().maxCoeff();
    const double cov_err = (cov - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
    return {mean_err <= 0.05 && cov_err <= 0.05,
            "max |mean| " + fmt(mean_err) + ", max |cov - I| " + fmt(cov_err) + " (limits 0.05)"};
}

// Criteria 7 and 8 ------------------------------------------------------------

fs::path config_path(const std::string& name) { return fs::path(DPS_CONFIG_DIR) / name; }

// Trains from a config and returns the final checkpoint.
fs::path train_run(const std::string& config, const std::string& run) {
    const app::ExperimentConfig cfg = app::load_config(config_path(config));
    const fs::path out = fresh(run);
    std::ostringstream log;
    app::cmd_train(cfg, out, log);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    return out / manifest["details"]["final_checkpoint"].get<std::string>();
}

MetricsReport sample_and_evaluate(const fs::path& ckpt, const std::string& run, int samples,
                                  std::vector<std::string> metrics) {
    app::SampleOptions so;
    so.checkpoint = ckpt;
    so.samples = samples;
    app::cmd_sample(so, fresh(run + "_samples"));
    app::EvaluateOptions eo;
    eo.samples = g_workdir / (run + "_samples") / "samples.csv";
    eo.checkpoint = ckpt;
    eo.metrics = std::move(metrics);
    return app::cmd_evaluate(eo, fresh(run + "_eval"));
}

Outcome mixing_recovery() {
    const MetricsReport dps = sample_and_evaluate(train_run("two_mode.json", "c7_dps"), "c7_dps", 1000, {"mixing"});
    const MetricsReport sfpe =
        sample_and_evaluate(train_run("two_mode_score.json", "c7_score"), "c7_score", 1000, {"mixing"});
    const double a = *dps.mixing_l2, b = *sfpe.mixing_l2;
    return {a <= 0.05 && b >= 3.0 * a, "mixing L2 error: log-density model " + fmt(a) + " (limit 0.05), score model " +
                                           fmt(b) + " (ratio " + fmt(a > 0 ? b / a : INFINITY) + ", needs >= 3)"};
}

Outcome nine_gaussians() {
    const MetricsReport r =
        sample_and_evaluate(train_run("9gaussians_desk.json", "c8_dps"), "c8_dps", 1000, {"kl", "mixing"});
    const TargetDistribution target = make_9gaussians();
    const SampleSet lmc = lmc_baseline(target, 0.02, 100000, 1000, 8);
    const double lmc_mix = mixing_error(lmc.samples, *target.modes());
    const double kl = *r.kl_estimate, mix = *r.mixing_l2;
    return {kl <= 0.10 && mix <= 0.05 && lmc_mix >= 0.3,
            "KL " + fmt(kl) + " (limit 0.10), mixing L2 " + fmt(mix) + " (limit 0.05), LMC step 0.02 mixing L2 " +
                fmt(lmc_mix) + " (needs >= 0.3)"};
}

// Criterion 9 -----------------------------------------------------------------

Outcome kl_calibration() {
    Rng rng = make_stream(9, "acceptance-kl");
    const Eigen::MatrixXd p = standard_normal_matrix(rng, 1, 5000).transpose();
    const Eigen::MatrixXd q = (standard_normal_matrix(rng, 1, 5000).array() + 1.0).matrix().transpose();
    const double shifted = knn_kl(p, q, 5);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r = make_stream(seed, "acceptance-kl-same");
        const Eigen::MatrixXd a = standard_normal_matrix(r, 1, 5000).transpose();
        const Eigen::MatrixXd b = standard_normal_matrix(r, 1, 5000).transpose();
        worst = std::max(worst, std::abs(knn_kl(a, b, 5)));
    }
    return {std::abs(shifted - 0.5) <= 0.1 && worst <= 0.05,
            "N(0,1) vs N(1,1): " + fmt(shifted) + " (0.5 +- 0.1), identical: max |estimate| over 10 seeds " +
                fmt(worst) + " (limit 0.05)"};
}

// Criterion 10 ----------------------------------------------------------------

// Every CSV below `dir`, keyed by relative path.
std::map<std::string, std::string> csv_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

Outcome reproducibility() {
    app::ExperimentConfig cfg = app::load_config(config_path("9gaussians.json"));
    cfg.train.iterations = 300;
    cfg.train.checkpoint_every = 100;
    std::vector<std::string> mismatches;
    int compared = 0;
    const auto run_all = [&](const std::string& tag, int workers) {
        set_workers(workers);
        cfg.workers = workers;
        std::ostringstream log;
        const fs::path root = fresh("c10_" + tag);
        app::cmd_train(cfg, root / "train", log);
        app::SampleOptions so;
        so.checkpoint = root / "train" / "checkpoints" / "ckpt_300.ckpt";
        so.samples = 500;
        so.steps = 200;
        app::cmd_sample(so, root / "sample");
        app::EvaluateOptions eo;
        eo.samples = root / "sample" / "samples.csv";
        eo.checkpoint = so.checkpoint;
        eo.reference_samples = 2000;
        app::cmd_evaluate(eo, root / "evaluate");
        for (const char* kind : {"weight-sweep", "bounds", "score-residual"}) {
            app::OracleCommand oc;
            oc.kind = kind;
            oc.pairs = 5;
            app::cmd_oracle(oc, root / (std::string("oracle_") + kind));
        }
        set_workers(1);
        return csv_files(root);
    };
    const auto a = run_all("a", 1);
    const auto b = run_all("b", 1);
    const auto c = run_all("c", 3);
    for (const auto* other : {&b, &c}) {
        if (other->size() != a.size()) mismatches.push_back("file sets differ");
        for (const auto& [name, bytes] : a) {
            ++compared;
            const auto it = other->find(name);
            if (it == other->end() || it->second != bytes) mismatches.push_back(name + (other == &c ? " (3 workers)" : ""));
        }
    }
    std::string detail = std::to_string(a.size()) + " CSV files from train/sample/evaluate/oracle, " +
                         std::to_string(compared) + " comparisons (rerun and 1 vs 3 workers)";
    if (!mismatches.empty()) {
        detail += "; differing:";
        for (const auto& m : mismatches) detail += " " + m;
    }
    return {mismatches.empty() && a.size() >= 7, detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> selected;
    std::string workdir = (fs::temp_directory_path() / "dps_acceptance").string();
    app.add_option("criteria", selected, "Criterion numbers (default: all)")->check(CLI::Range(1, 10));
    app.add_option("--workdir", workdir, "Directory for run outputs");
    CLI11_PARSE(app, argc, argv);
    g_workdir = workdir;
    fs::create_directories(g_workdir);

    const std::vector<Criterion> all = {
        {1, "differentiation matches finite differences", differentiation},
        {2, "exact solutions have zero residual", exact_residual},
        {3, "Hutchinson estimator is unbiased", hutchinson},
        {4, "score equation cannot tell the weightings apart", indistinguishability},
        {5, "closed-form KL and Fisher bounds hold", bounds},
        {6, "sampler with the exact Gaussian score", exact_sampler},
        {7, "mixing proportions of a two-mode mixture", mixing_recovery},
        {8, "9-Gaussians at desk scale", nine_gaussians},
        {9, "kNN KL estimator calibration", kl_calibration},
        {10, "byte-identical outputs across runs and worker counts", reproducibility},
    };
    int failures = 0;
    for (const auto& c : all) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::cout << "criterion " << std::setw(2) << c.id << "  " << (o.pass ? "PASS" : "FAIL") << "  " << c.name
                  << ": " << o.detail << " [" << std::fixed << std::setprecision(1) << secs << " s]"
                  << std::defaultfloat << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
