// Command-line driver for the conversational search policy lab: generate
// datasets, derive expert labels, train policies, evaluate them, and render
// the full comparison table. Every run writes a manifest so artifacts are
// regenerable from config + seed.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convpol/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"convpol: conversational search policy lab"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    app.set_version_flag("--version", convpol::kVersion);

    std::string config_path;
    std::string out_dir;
    std::string dataset;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "experiment config file (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    auto* out_opt = app.add_option("--out", out_dir, "override the output directory");
    auto* data_opt = app.add_option("--data", dataset, "override the dataset path");

    auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic dataset");
    auto* cmd_experts =
        app.add_subcommand("experts", "derive expert labels for a cascade alpha");
    auto* cmd_train = app.add_subcommand("train", "train a policy");
    auto* cmd_eval = app.add_subcommand("eval", "evaluate one policy on the test split");
    auto* cmd_compare = app.add_subcommand("compare", "train and tabulate all policies");

    double experts_alpha = 0.5;
    cmd_experts->add_option("--alpha", experts_alpha, "cascade alpha")->required();

    std::string algo;
    double train_alpha = 0.5;
    double train_r = 0.11;
    cmd_train->add_option("--algo", algo, "lsgail|ctxpred|rcsq")->required();
    cmd_train->add_option("--alpha", train_alpha, "cascade alpha (lsgail, ctxpred)");
    cmd_train->add_option("--r", train_r, "question reward (rcsq; penalty is r-1)");

    std::string policy;
    std::vector<double> eval_alphas;
    double eval_alpha = 0.5;
    double eval_r = 0.11;
    cmd_eval->add_option("--policy", policy, "q0a|q1a|q2a|ctxpred|rcsq|lsgail|oracle")
        ->required();
    cmd_eval->add_option("--alphas", eval_alphas, "ECRR alphas, comma separated")
        ->delimiter(',');
    cmd_eval->add_option("--alpha", eval_alpha, "checkpoint alpha (ctxpred, lsgail)");
    cmd_eval->add_option("--r", eval_r, "checkpoint reward (rcsq)");

    CLI11_PARSE(app, argc, argv);

    try {
        convpol::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = convpol::load_config(config_path);
        if (*seed_opt) cfg.seed = seed;
        if (*out_opt) cfg.out_dir = out_dir;
        if (*data_opt) cfg.dataset = dataset;
        convpol::validate(cfg);
        convpol::OutputLock lock(cfg.out_dir);

        if (cmd_gen->parsed()) {
            std::cout << "wrote " << convpol::run_gen(cfg) << '\n';
        } else if (cmd_experts->parsed()) {
            std::cout << "wrote " << convpol::run_experts(cfg, experts_alpha) << '\n';
        } else if (cmd_train->parsed()) {
            convpol::run_train(cfg, algo, train_alpha, train_r);
            std::cout << "trained " << algo << '\n';
        } else if (cmd_eval->parsed()) {
            if (eval_alphas.empty()) eval_alphas = cfg.alphas;
            std::cout << "wrote "
                      << convpol::run_eval(cfg, policy, eval_alphas, eval_alpha, eval_r) << '\n';
        } else if (cmd_compare->parsed()) {
            std::cout << "wrote " << convpol::run_compare(cfg) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
