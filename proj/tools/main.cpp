#include "commands.hpp"

#include "dps/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace dps::app;
    CLI::App app{"Diffusion sampler trained with a physics-informed log-density model"};
    app.require_subcommand(1);

    std::string config, out, checkpoint, target, method, results, samples_path;
    std::uint64_t seed = 0;
    int workers = 1;

    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "Run directory to create")->required();
    auto* train_seed = train->add_option("--seed", seed, "Override the config seed");
    auto* train_workers = train->add_option("--workers", workers, "Override the worker count")->check(CLI::PositiveNumber);

    SampleOptions so;
    int steps = 0, count = 0;
    double radius = 0.0;
    auto* sample = app.add_subcommand("sample", "Draw samples with a trained checkpoint");
    sample->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    sample->add_option("--out", out, "Output directory to create")->required();
    auto* s_steps = sample->add_option("--steps", steps, "Reverse-process steps");
    auto* s_count = sample->add_option("--samples", count, "Number of samples");
    auto* s_radius = sample->add_option("--radius", radius, "Truncation radius");
    auto* s_seed = sample->add_option("--seed", seed, "Sampling seed (default: the checkpoint seed)");
    auto* s_target = sample->add_option("--target", target, "Expected target name");
    auto* s_workers = sample->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

    EvaluateOptions eo;
    int k = 0, refs = 0;
    auto* eval = app.add_subcommand("evaluate", "Score samples against a target");
    eval->add_option("--samples", samples_path, "samples.csv")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out, "Output directory to create")->required();
    auto* e_config = eval->add_option("--config", config, "Experiment config for the target and settings");
    auto* e_target = eval->add_option("--target", target, "Named target");
    auto* e_ckpt = eval->add_option("--checkpoint", checkpoint, "Checkpoint for the score metric");
    eval->add_option("--metric", eo.metrics, "kl, mixing or score (repeatable)");
    auto* e_k = eval->add_option("--k", k, "Neighbours for the KL estimator");
    auto* e_refs = eval->add_option("--reference-samples", refs, "Reference sample count");
    eval->add_option("--seed", eo.seed, "Seed for reference and evaluation draws");
    auto* e_method = eval->add_option("--method", method, "Method label for the results row");
    auto* e_results = eval->add_option("--results", results, "Shared results CSV to append to");
    auto* e_workers = eval->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

    OracleCommand oc;
    auto* oracle = app.add_subcommand("oracle", "Compute reference quantities for Gaussian-mixture pairs");
    oracle->add_option("kind", oc.kind, "weight-sweep, bounds or score-residual")
        ->required()
        ->check(CLI::IsMember({"weight-sweep", "bounds", "score-residual"}));
    oracle->add_option("--out", out, "Output directory to create")->required();
    oracle->add_option("--seed", oc.seed, "Seed for random pairs and points");
    oracle->add_option("--pairs", oc.pairs, "Random pairs for the bounds check")->check(CLI::NonNegativeNumber);
    oracle->add_option("--points", oc.points, "Points per mixture for the residual check")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            ExperimentConfig cfg = load_config(config);
            if (*train_seed) {
                cfg.seed = seed;
                cfg.train.seed = seed;
                cfg.sampler.seed = seed;
            }
            if (*train_workers) cfg.workers = workers;
            cmd_train(cfg, out, std::cout);
        } else if (*sample) {
            dps::set_workers(*s_workers ? workers : 1);
            so.checkpoint = checkpoint;
            if (*s_steps) so.steps = steps;
            if (*s_count) so.samples = count;
            if (*s_radius) so.radius = radius;
            if (*s_seed) so.seed = seed;
            if (*s_target) so.target = target;
            cmd_sample(so, out);
            std::cout << "wrote " << out << '\n';
        } else if (*eval) {
            dps::set_workers(*e_workers ? workers : 1);
            eo.samples = samples_path;
            if (*e_config) eo.config = config;
            if (*e_target) eo.target = target;
            if (*e_ckpt) eo.checkpoint = checkpoint;
            if (*e_k) eo.k = k;
            if (*e_refs) eo.reference_samples = refs;
            if (*e_method) eo.method = method;
            if (*e_results) eo.results = results;
            const dps::MetricsReport r = cmd_evaluate(eo, out);
            std::cout << r.to_json() << '\n';
        } else if (*oracle) {
            cmd_oracle(oc, out);
            std::cout << "wrote " << out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
