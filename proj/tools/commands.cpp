#include "commands.hpp"

#include "dps/checkpoint.hpp"
#include "dps/parallel.hpp"
#include "dps/sampler.hpp"
#include "dps/theory.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

namespace dps::app {

namespace fs = std::filesystem;

namespace {

constexpr int kCsvFormat = 1;
constexpr int kManifestFormat = 1;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write to " + path.string() + " failed");
}

struct LoadedModel {
    TargetSpec spec;
    TargetDistribution target;
    std::string kind;
    Checkpoint ckpt;
};

LoadedModel load_model(const fs::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    TargetSpec spec;
    const auto it = ckpt.metadata.find("target_spec");
    if (it != ckpt.metadata.end()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(it->second);
        } catch (const nlohmann::json::parse_error&) {
            throw CheckpointError(path.string() + ": malformed target_spec metadata");
        }
        spec = parse_target(j, "checkpoint target_spec");
    } else if (ckpt.metadata.count("target")) {
        spec = parse_target(ckpt.metadata.at("target"), "checkpoint target");
    } else {
        throw CheckpointError(path.string() + ": checkpoint does not name its target");
    }
    const auto kind = ckpt.metadata.count("kind") ? ckpt.metadata.at("kind") : std::string("logdensity");
    if (kind != "logdensity" && kind != "score") throw CheckpointError(path.string() + ": unknown model kind '" + kind + "'");
    TargetDistribution target = spec.build();
    return {std::move(spec), std::move(target), kind, std::move(ckpt)};
}

std::string defaults_name(const TargetSpec& spec) { return spec.mixture ? std::string("mog") : spec.name; }

}  // namespace

RunDir::RunDir(fs::path out) : out_(std::move(out)) {
    if (out_.empty()) throw std::invalid_argument("an output directory is required");
    if (fs::exists(out_) && !(fs::is_directory(out_) && fs::is_empty(out_))) {
        throw OutputExistsError("refusing to overwrite existing output '" + out_.string() + "'");
    }
    const fs::path parent = out_.has_parent_path() ? out_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    staging_ = parent / ("." + out_.filename().string() + ".staging");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
}

RunDir::~RunDir() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }
}

void RunDir::commit() {
    if (fs::exists(out_)) fs::remove(out_);  // empty directory, checked on construction
    fs::rename(staging_, out_);
    committed_ = true;
}

void write_manifest(const RunDir& dir, const std::string& command, std::uint64_t config_hash, std::uint64_t seed,
                    const std::vector<std::string>& outputs, const nlohmann::ordered_json& extra) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = hex(config_hash);
    j["seed"] = seed;
    j["formats"] = {{"checkpoint", kCheckpointVersion}, {"csv", kCsvFormat}, {"manifest", kManifestFormat}};
    j["outputs"] = outputs;
    if (!extra.is_null()) j["details"] = extra;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const TargetDistribution target = cfg.target.build();
    RunDir dir(out);
    set_workers(cfg.workers);

    TrainConfig tc = cfg.train;
    tc.checkpoint_dir = dir / "checkpoints";
    tc.metadata["target_spec"] = cfg.target.to_json().dump();
    tc.metadata["config_hash"] = hex(cfg.hash());
    tc.metadata["sampler"] =
        nlohmann::json{{"steps", cfg.sampler.steps}, {"samples", cfg.sampler.samples}, {"radius", cfg.sampler.radius}}
            .dump();

    const std::uint64_t every = std::max<std::uint64_t>(1, tc.iterations / 20);
    auto progress = [&](const TrainLogRow& r) {
        if (r.iteration % every == 0 || r.iteration == tc.iterations) {
            log << "iteration " << r.iteration << "  loss " << r.loss << "  grad_norm " << r.grad_norm << "  lr " << r.lr
                << std::endl;
        }
    };

    TrainLog train_log;
    if (cfg.mode == "score") {
        train_log = train_score_fpe(target, tc, progress).log;
    } else {
        TrainCallbacks cb;
        cb.progress = progress;
        if (target.oracle()) {
            Rng rng = make_stream(cfg.seed, "eval");
            const Eigen::MatrixXd eval =
                perturbed_eval_samples(target, cfg.evaluate.score_time, cfg.evaluate.score_samples, rng);
            const double t = cfg.evaluate.score_time;
            cb.checkpoint_metric = [eval, t](std::uint64_t, const LogDensityModel& m) -> std::optional<double> {
                return score_l2_error(m, t, eval);
            };
        }
        train_log = train(target, tc, cb).log;
    }
    train_log.write_csv(dir / "train_log.csv");
    write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");

    std::vector<std::string> outputs{"config.json", "train_log.csv"};
    for (const auto& p : train_log.checkpoints) outputs.push_back("checkpoints/" + p.filename().string());
    nlohmann::ordered_json extra;
    extra["target"] = cfg.target.name;
    extra["mode"] = cfg.mode;
    extra["final_checkpoint"] = outputs.back();
    write_manifest(dir, "train", cfg.hash(), cfg.seed, outputs, extra);
    dir.commit();
    log << "wrote " << out.string() << '\n';
}

void cmd_sample(const SampleOptions& opts, const fs::path& out) {
    // Load and validate everything before any output exists.
    const LoadedModel lm = load_model(opts.checkpoint);
    if (opts.target && *opts.target != lm.spec.name) {
        throw std::invalid_argument("checkpoint was trained on '" + lm.spec.name + "', not '" + *opts.target + "'");
    }
    // Defaults: the sampler section the model was trained with, else the target's.
    SamplerConfig cfg = SamplerConfig::defaults_for(defaults_name(lm.spec));
    if (const auto it = lm.ckpt.metadata.find("sampler"); it != lm.ckpt.metadata.end()) {
        const auto j = nlohmann::json::parse(it->second, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw CheckpointError(opts.checkpoint.string() + ": malformed sampler metadata");
        try {
            cfg.steps = j.value("steps", cfg.steps);
            cfg.samples = j.value("samples", cfg.samples);
            cfg.radius = j.value("radius", cfg.radius);
        } catch (const nlohmann::json::exception&) {
            throw CheckpointError(opts.checkpoint.string() + ": malformed sampler metadata");
        }
    }
    if (opts.steps) cfg.steps = *opts.steps;
    if (opts.samples) cfg.samples = *opts.samples;
    if (opts.radius) cfg.radius = *opts.radius;
    cfg.seed = opts.seed.value_or(lm.ckpt.seed);
    cfg.validate();

    SampleSet s;
    if (lm.kind == "score") {
        s = sample(ScoreModel(lm.target, lm.ckpt.params), cfg);
    } else {
        s = sample(LogDensityModel(lm.target, lm.ckpt.params), cfg);
    }

    RunDir dir(out);
    s.write_csv((dir / "samples.csv").string());
    s.write_sidecar((dir / "samples.json").string());
    nlohmann::ordered_json resolved;
    resolved["checkpoint_seed"] = lm.ckpt.seed;
    resolved["checkpoint_iteration"] = lm.ckpt.iteration;
    resolved["target"] = lm.spec.to_json();
    resolved["kind"] = lm.kind;
    resolved["sampler"] = nlohmann::json::parse(s.config_text);
    resolved["seed"] = cfg.seed;
    write_manifest(dir, "sample", fnv1a(resolved.dump()), cfg.seed, {"samples.csv", "samples.json"}, resolved);
    dir.commit();
}

MetricsReport cmd_evaluate(const EvaluateOptions& opts, const fs::path& out) {
    std::optional<TargetSpec> spec;
    EvaluateSettings settings;
    if (opts.config) {
        const ExperimentConfig cfg = load_config(*opts.config);
        spec = cfg.target;
        settings = cfg.evaluate;
    }
    std::optional<LoadedModel> model;
    if (opts.checkpoint) model = load_model(*opts.checkpoint);
    if (!spec && opts.target) spec = parse_target(*opts.target, "--target");
    if (!spec && model) spec = model->spec;
    if (!spec) throw std::invalid_argument("evaluate needs --target, --config or --checkpoint");
    if (opts.k) settings.k = *opts.k;
    if (opts.reference_samples) settings.reference_samples = *opts.reference_samples;
    if (!opts.metrics.empty()) settings.metrics = opts.metrics;

    const TargetDistribution target = spec->build();
    const SampleSet samples = SampleSet::read_csv(opts.samples.string());
    if (samples.samples.cols() != target.dim()) {
        throw std::invalid_argument("samples have dimension " + std::to_string(samples.samples.cols()) + " but '" +
                                    target.name() + "' has dimension " + std::to_string(target.dim()));
    }
    std::string method = "unknown";
    fs::path sidecar = opts.samples;
    sidecar.replace_extension(".json");
    if (fs::exists(sidecar)) {
        std::ifstream is(sidecar);
        const auto j = nlohmann::json::parse(is, nullptr, false);
        if (!j.is_discarded() && j.contains("method") && j["method"].is_string()) method = j["method"];
    }
    if (opts.method) method = *opts.method;

    auto wants = [&](const std::string& m) {
        return std::find(settings.metrics.begin(), settings.metrics.end(), m) != settings.metrics.end();
    };
    const bool all = settings.metrics.empty();
    for (const auto& m : settings.metrics) {
        if (m != "kl" && m != "mixing" && m != "score") throw std::invalid_argument("unknown metric '" + m + "'");
    }
    if (wants("mixing") && !target.modes()) throw UnsupportedTargetError("'" + target.name() + "' has no mode partition");
    if (wants("score")) {
        if (!target.oracle()) throw UnsupportedTargetError("score error needs a mixture oracle; '" + target.name() + "' has none");
        if (!model) throw std::invalid_argument("the score metric needs --checkpoint");
    }

    MetricsReport r;
    r.target = target.name();
    r.method = method;
    r.seed = opts.seed;
    r.samples = samples.samples.rows();
    r.k = settings.k;
    if (all || wants("kl")) {
        Rng rng = make_stream(opts.seed, "eval");
        const Eigen::MatrixXd ref = sample_reference(target, settings.reference_samples, rng);
        r.kl_dims = kl_projection_dims(target.name(), target.dim());
        r.reference_samples = ref.rows();
        r.kl_estimate = knn_kl(samples.samples.leftCols(r.kl_dims), ref.leftCols(r.kl_dims), settings.k);
    }
    if ((all && target.modes()) || wants("mixing")) r.mixing_l2 = mixing_error(samples.samples, *target.modes());
    if ((all && target.oracle() && model) || wants("score")) {
        Rng rng = make_stream(opts.seed, "eval-score");
        const Eigen::MatrixXd eval = perturbed_eval_samples(target, settings.score_time, settings.score_samples, rng);
        if (model->kind == "score") {
            r.score_l2 = score_l2_error(ScoreModel(target, model->ckpt.params), settings.score_time, eval);
        } else {
            r.score_l2 = score_l2_error(LogDensityModel(target, model->ckpt.params), settings.score_time, eval);
        }
    }

    RunDir dir(out);
    write_text(dir / "report.json", r.to_json() + "\n");
    std::vector<std::string> outputs{"report.json"};
    if (opts.results) {
        r.append_csv(opts.results->string());
    } else {
        r.append_csv((dir / "results.csv").string());
        outputs.push_back("results.csv");
    }
    nlohmann::ordered_json resolved;
    resolved["samples"] = opts.samples.string();
    resolved["target"] = spec->to_json();
    resolved["metrics"] = settings.metrics;
    resolved["k"] = settings.k;
    resolved["reference_samples"] = settings.reference_samples;
    resolved["score_time"] = settings.score_time;
    resolved["method"] = method;
    write_manifest(dir, "evaluate", fnv1a(resolved.dump()), opts.seed, outputs, resolved);
    dir.commit();
    return r;
}

void cmd_oracle(const OracleCommand& cmd, const fs::path& out) {
    if (cmd.kind != "weight-sweep" && cmd.kind != "bounds" && cmd.kind != "score-residual") {
        throw std::invalid_argument("unknown oracle '" + cmd.kind + "' (expected weight-sweep, bounds or score-residual)");
    }
    RunDir dir(out);
    std::vector<std::string> outputs;
    auto open = [&](const std::string& name) {
        outputs.push_back(name);
        std::ofstream os(dir / name);
        if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
        os << std::setprecision(12);
        return os;
    };
    auto example = [](double w1, double wt1) {
        MogPair p;
        p.a1 = Eigen::Vector2d(-5, -5);
        p.a2 = Eigen::Vector2d(5, 5);
        p.w = Eigen::Vector2d(w1, 1 - w1);
        p.w_tilde = Eigen::Vector2d(wt1, 1 - wt1);
        return p;
    };

    if (cmd.kind == "weight-sweep") {
        {
            auto os = open("sweep_weights.csv");
            os << "w1,kl,fisher,logdensity_gap\n";
            for (int i = 1; i <= 19; ++i) {
                const MogPair p = example(0.05 * i, 0.2);
                os << 0.05 * i << ',' << numeric_kl(p, 0.0).value << ',' << numeric_fisher(p, 0.0).value << ','
                   << logdensity_gap(p, 0.0).value << '\n';
            }
        }
        auto os = open("sweep_time.csv");
        os << "t,kl,fisher,logdensity_gap\n";
        const MogPair p = example(0.5, 0.2);
        for (int i = 0; i <= 100; ++i) {
            const double t = std::min(0.01 * i, 1.0);
            os << t << ',' << numeric_kl(p, t).value << ',' << numeric_fisher(p, t).value << ','
               << logdensity_gap(p, t).value << '\n';
        }
    } else if (cmd.kind == "bounds") {
        auto os = open("bounds.csv");
        os << "pair,a1_0,a1_1,a2_0,a2_1,w1,w_tilde1,kl_bound,kl_numeric,kl_satisfied,fisher_bound,fisher_numeric,"
              "fisher_satisfied\n";
        Rng rng = make_stream(cmd.seed, "oracle-pairs");
        for (int i = 0; i <= cmd.pairs; ++i) {
            const MogPair p = i == 0 ? example(0.5, 0.2) : random_separated_pair(rng);
            const double kb = kl_lower_bound(p), kn = numeric_kl(p, 0.0).value;
            const double fb = fisher_upper_bound(p), fn = numeric_fisher(p, 0.0).value;
            os << i << ',' << p.a1[0] << ',' << p.a1[1] << ',' << p.a2[0] << ',' << p.a2[1] << ',' << p.w[0] << ','
               << p.w_tilde[0] << ',' << kb << ',' << kn << ',' << (kb <= kn) << ',' << fb << ',' << fn << ','
               << (fb >= fn) << '\n';
        }
    } else {
        auto os = open("score_residual.csv");
        os << "w1,x0,x1,t,residual_norm\n";
        Rng rng = make_stream(cmd.seed, "oracle-points");
        std::uniform_real_distribution<double> ux(-6.0, 6.0), ut(0.05, 0.9);
        for (double w1 : {0.5, 0.2}) {
            GaussianMixture mix = example(w1, w1).first();
            const AnalyticScore field = mog_exact_score(mix);
            for (int i = 0; i < cmd.points; ++i) {
                const Eigen::Vector2d x(ux(rng), ux(rng));
                const double t = ut(rng);
                os << w1 << ',' << x[0] << ',' << x[1] << ',' << t << ',' << score_fpe_residual(field, x, t).norm()
                   << '\n';
            }
        }
    }
    nlohmann::ordered_json resolved{{"kind", cmd.kind}, {"pairs", cmd.pairs}, {"points", cmd.points}};
    write_manifest(dir, "oracle", fnv1a(resolved.dump()), cmd.seed, outputs, resolved);
    dir.commit();
}

}  // namespace dps::app
