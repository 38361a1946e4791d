#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedcaug/experiment.hpp"
#include "fedcaug/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"FedCAug: federated causal-augmentation simulator"};
    app.set_version_flag("--version", FEDCAUG_VERSION);
    app.require_subcommand(0, 1);

    std::string run_config;
    std::string run_arm;
    std::optional<std::uint64_t> run_seed;
    std::string run_out;
    CLI::App* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    run->add_option("config", run_config, "path to the experiment config")->required();
    run->add_option("--arm", run_arm, "restrict to one arm (fedavg | crl_ca_ce | crl_ca_ce_align)");
    run->add_option("--seed", run_seed, "restrict to one seed");
    run->add_option("--out", run_out, "override the output directory");

    std::string export_config;
    std::string export_out;
    CLI::App* exp = app.add_subcommand(
        "export", "write sharpened/mask/composite triplets for visual inspection");
    exp->add_option("config", export_config, "path to the experiment config")->required();
    exp->add_option("--out", export_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        fedcaug::cli::RunOverrides overrides;
        if (!run_arm.empty()) overrides.arm = run_arm;
        if (run_seed) overrides.seed = run_seed;
        if (!run_out.empty()) overrides.out_dir = run_out;
        return fedcaug::cli::run_experiment(run_config, overrides);
    }
    if (exp->parsed()) {
        return fedcaug::cli::export_augmented_corpus_cli(export_config, export_out);
    }
    std::cout << app.help();
    return 0;
}
