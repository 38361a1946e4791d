#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedcaug/eval.hpp"
#include "fedcaug/fedsim.hpp"

namespace fedcaug::cli {

struct DatasetConfig {
    std::string source = "synthetic";  // "synthetic" | "idx"
    data::SpuriousSpec spurious;
    int train_per_class = 80;
    int eval_per_class = 50;
    double dirichlet_beta = 0.5;
    std::string idx_images;
    std::string idx_labels;
    double idx_holdout_fraction = 0.1;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    fed::FederatedConfig federated;  // arm and seed are filled per run
    std::vector<fed::Arm> arms = {fed::Arm::FedAvg};
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "out";
};

// Throws ConfigError with field/line diagnostics on any problem.
ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct RunResult {
    fed::Arm arm = fed::Arm::FedAvg;
    std::uint64_t seed = 0;
    std::vector<fed::RoundReport> history;
    eval::ProbeResult probe;
    std::vector<std::vector<long long>> confusion;
    double final_id_accuracy = 0.0;
    double final_ood_accuracy = 0.0;
    nn::ModelParams final_params;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
};

// Full protocol for every requested seed x arm: generate/load data, partition,
// build pools, run rounds, final probe + confusion. Does not touch the disk.
ExperimentResult run_experiment_config(const ExperimentConfig& cfg);

// As above, plus CSV/JSON/summary/checkpoint emission under cfg.output_dir.
ExperimentResult run_and_emit(const ExperimentConfig& cfg);

// CLI entries. Exit codes: 0 success, 1 runtime failure, 2 invalid config.
struct RunOverrides {
    std::optional<std::string> arm;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};
int run_experiment(const std::string& config_path, const RunOverrides& overrides = {});

// Writes per-sample triplets (sharpened PPM, mask PGM, composite PPM) plus a
// combined bboxes.txt; returns the number of per-sample files written.
int export_augmented_corpus(const ExperimentConfig& cfg, const std::string& out_dir);
int export_augmented_corpus_cli(const std::string& config_path, const std::string& out_dir);

// Report writers (also used by tests).
std::string rounds_csv(const ExperimentResult& result);
std::string summary_csv(const ExperimentResult& result);
std::string report_json(const ExperimentConfig& cfg, const ExperimentResult& result);
std::string summary_table(const ExperimentResult& result);

}  // namespace fedcaug::cli
