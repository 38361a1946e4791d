#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedcaug/crl.hpp"
#include "fedcaug/dataset.hpp"
#include "fedcaug/eval.hpp"
#include "fedcaug/model.hpp"

namespace fedcaug::fed {

// Ablation arms: plain FedAvg, counterfactual augmentation with the extra CE
// term, and the same plus the feature-alignment term.
enum class Arm { FedAvg, CrlCaCe, CrlCaCeAlign };

std::string arm_name(Arm arm);
std::optional<Arm> parse_arm(const std::string& name);

struct FederatedConfig {
    int num_clients = 5;
    int rounds = 20;
    int local_epochs = 5;
    int batch_size = 64;
    double lr = 0.005;
    double weight_decay = 0.01;
    double sample_fraction = 1.0;
    double alpha = 0.9;  // object weight of the composite blend
    double align_weight = 0.1;
    Arm arm = Arm::FedAvg;
    std::uint64_t seed = 1;
    // When false, each sample keeps one fixed donor background instead of
    // redrawing per epoch.
    bool resample_augmentation_per_epoch = true;
    crl::CrlConfig crl;  // sharpening lambda, Canny params, saliency backend
    nn::Architecture arch;
};

struct RoundReport {
    int round_index = 0;
    double mean_train_loss = 0.0;
    double mean_ce = 0.0;
    double mean_ca = 0.0;
    double mean_align = 0.0;
    double id_accuracy = 0.0;
    double ood_accuracy = 0.0;
    double background_confidence = 0.0;  // mean max-softmax on background-only probes
    double seconds = 0.0;
};

struct ServerState {
    nn::ModelParams global_params;
    int round_index = 0;
    std::vector<RoundReport> history;
};

struct LocalMetrics {
    double total = 0.0, ce = 0.0, ca = 0.0, align = 0.0;
    int batches = 0;
};

struct ClientUpdate {
    nn::ModelParams params;
    std::size_t sample_count = 0;
    LocalMetrics metrics;
};

// RNG stream for one client in one round, independent of scheduling.
std::uint64_t client_stream_seed(std::uint64_t seed, int client_id, int round);

// Deterministic derivation of auxiliary streams (data generation, init, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// E epochs of shuffled mini-batch SGD on a copy of the global parameters.
// For augmentation arms each batch is paired with on-the-fly counterfactuals:
// cached sharpened/localized objects composited onto random same-shard
// backgrounds, labels preserved. `sources` may be empty for the FedAvg arm;
// when null for an augmentation arm it is computed from the shard.
ClientUpdate local_train(const nn::ModelParams& global_params, const data::ClientShard& shard,
                         const FederatedConfig& cfg, int round,
                         const std::vector<crl::CausalSource>* sources = nullptr);

// Sample-count-weighted mean of parameter tensors.
nn::ModelParams fedavg_aggregate(
    const std::vector<std::pair<nn::ModelParams, std::size_t>>& updates);

struct EvalSets {
    std::vector<data::LabeledImage> id_set;
    std::vector<data::LabeledImage> ood_set;
    eval::ProbeInputs probe;  // prepared once; parameter-independent
};

// Runs cfg.rounds communication rounds: seeded client selection, local
// training (parallel across clients up to FEDCAUG_THREADS), sample-weighted
// aggregation in client-id order, then evaluation. Deterministic for a fixed
// seed regardless of thread count.
ServerState run_rounds(const FederatedConfig& cfg, const std::vector<data::ClientShard>& shards,
                       const EvalSets& eval_sets,
                       const std::vector<std::vector<crl::CausalSource>>* sources = nullptr);

// Client parallelism cap: FEDCAUG_THREADS if set, else hardware concurrency.
int max_client_threads();

}  // namespace fedcaug::fed
