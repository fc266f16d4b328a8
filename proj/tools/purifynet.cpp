// SPDX-License-Identifier: Apache-2.0
// purifynet: command-line driver for the purification pipeline.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "purifynet/purifynet.hpp"

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::size_t threads = 0;
    long long seed = -1;
    std::string model = "all";
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "JSON experiment config")->required();
    cmd->add_option("--set", o.overrides, "Override a config value by dotted path, e.g. diffusion.schedule.T=100")
        ->take_all();
    cmd->add_option("--threads", o.threads, "Worker cap for parallel sweeps")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Set dataset, classifier and diffusion seeds and the sweep seed list")
        ->check(CLI::NonNegativeNumber);
}

purifynet::ExperimentConfig load(const Options& o) {
    std::vector<std::string> sets = o.overrides;
    if (o.threads > 0) sets.push_back("threads=" + std::to_string(o.threads));
    if (o.seed >= 0) {
        const std::string s = std::to_string(o.seed);
        for (const char* key : {"dataset.seed", "classifier.seed", "diffusion.seed"}) sets.push_back(std::string(key) + "=" + s);
        sets.push_back("sweep.seeds=[" + s + "]");
    }
    return purifynet::load_config(o.config_path, sets);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-based adversarial purification for tabular intrusion detection"};
    app.require_subcommand(1);
    Options o;
    auto* pre = app.add_subcommand("preprocess", "Load or generate data and write train/test caches");
    auto* train = app.add_subcommand("train", "Train the classifier and/or diffusion models");
    auto* attack = app.add_subcommand("attack", "Generate adversarial batches for every configured attack");
    auto* sweep = app.add_subcommand("sweep", "Purification sweeps over the diffusion-step grid");
    auto* report = app.add_subcommand("report", "Alignment, epsilon and attack benchmark tables");
    for (auto* c : {pre, train, attack, sweep, report}) add_common(c, o);
    train->add_option("--model", o.model, "classifier, diffusion or all")
        ->check(CLI::IsMember({"classifier", "diffusion", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? purifynet::exit_ok : purifynet::exit_usage;
    }

    purifynet::RunContext ctx;
    try {
        ctx.config = load(o);
    } catch (const std::exception& e) {
        std::cerr << "purifynet: " << e.what() << "\n";
        return purifynet::exit_usage;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        ctx.run_dir = purifynet::resolve_run_dir(ctx.config, name == "preprocess");
        std::cout << "run directory: " << ctx.run_dir.string() << "\n";
        if (name == "preprocess") purifynet::cmd_preprocess(ctx);
        else if (name == "train") purifynet::cmd_train(ctx, o.model);
        else if (name == "attack") purifynet::cmd_attack(ctx);
        else if (name == "sweep") purifynet::cmd_sweep(ctx);
        else purifynet::cmd_report(ctx);
        purifynet::update_manifest(ctx, name);
    } catch (const purifynet::ConfigError& e) {
        std::cerr << "purifynet: " << e.what() << "\n";
        return purifynet::exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "purifynet: " << e.what() << "\n";
        return purifynet::exit_runtime;
    }
    return purifynet::exit_ok;
}
