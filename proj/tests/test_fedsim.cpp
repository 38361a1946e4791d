#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <random>
#include <vector>

#include "fedcaug/error.hpp"
#include "fedcaug/fedsim.hpp"
#include "test_util.hpp"

using namespace fedcaug;
using data::ClientShard;
using fed::Arm;
using fed::FederatedConfig;
using nn::ModelParams;
using nn::Tensor;

namespace {

// Minimal params for aggregation algebra: one named scalar tensor.
ModelParams scalar_params(double v) {
    ModelParams p;
    p.tensors.emplace("w", Tensor({1}, {v}));
    return p;
}

FederatedConfig small_config() {
    FederatedConfig cfg;
    cfg.num_clients = 2;
    cfg.rounds = 2;
    cfg.local_epochs = 2;
    cfg.batch_size = 16;
    cfg.lr = 0.02;
    cfg.weight_decay = 0.01;
    cfg.seed = 11;
    cfg.arch.in_channels = 3;
    cfg.arch.in_height = 28;
    cfg.arch.in_width = 28;
    cfg.arch.conv_channels = 4;
    cfg.arch.hidden_dim = 16;
    cfg.arch.num_classes = 10;
    return cfg;
}

data::SpuriousSpec digits_spec(double rho) {
    data::SpuriousSpec s;
    s.num_classes = 10;
    s.num_backgrounds = 10;
    s.train_correlation = rho;
    return s;
}

std::vector<ClientShard> make_shards(int clients, int per_class, double rho, std::uint64_t seed,
                                     bool with_pools, const crl::CrlConfig& crl_cfg,
                                     std::vector<std::vector<crl::CausalSource>>* sources = nullptr) {
    const auto samples = data::synth_colored_digits(digits_spec(rho), per_class, seed);
    auto shards = data::dirichlet_partition(samples, clients, 0.5, seed + 1);
    if (with_pools) {
        if (sources) sources->assign(shards.size(), {});
        for (std::size_t k = 0; k < shards.size(); ++k) {
            shards[k] = data::build_background_pool(std::move(shards[k]), crl_cfg,
                                                    sources ? &(*sources)[k] : nullptr);
        }
    }
    return shards;
}

fed::EvalSets make_eval_sets(double rho, std::uint64_t seed, const crl::CrlConfig& crl_cfg,
                             int per_class = 5) {
    fed::EvalSets sets;
    sets.id_set = data::synth_colored_digits(digits_spec(rho), per_class, seed);
    sets.ood_set = data::make_ood_test_split(digits_spec(rho), per_class, seed + 1);
    sets.probe = eval::prepare_probe_inputs(sets.ood_set, crl_cfg, 10);
    return sets;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (const auto& [name, t] : a.tensors) {
        auto it = b.tensors.find(name);
        if (it == b.tensors.end() || it->second.data != t.data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("aggregate of identical updates returns the same parameters") {
    const ModelParams p = nn::init_params(small_config().arch, 3);
    const ModelParams out = fed::fedavg_aggregate({{p, 10}, {p, 3}, {p, 1}});
    // Mean of equals, up to the rounding of the weighted sum.
    for (const auto& [name, t] : p.tensors) {
        const Tensor& u = out.tensors.at(name);
        REQUIRE(nn::same_shape(t, u));
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(u[i] == doctest::Approx(t[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("aggregate with equal counts is the elementwise midpoint") {
    const ModelParams p = scalar_params(1.0);
    const ModelParams q = scalar_params(3.0);
    const ModelParams out = fed::fedavg_aggregate({{p, 7}, {q, 7}});
    CHECK(out.tensors.at("w")[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("aggregate hand case: counts (3,1) over scalars 0 and 4 gives 1.0") {
    const ModelParams out =
        fed::fedavg_aggregate({{scalar_params(0.0), 3}, {scalar_params(4.0), 1}});
    CHECK(out.tensors.at("w")[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("aggregate is permutation invariant and count-scaling invariant") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    const nn::Architecture arch = small_config().arch;

    std::vector<std::pair<ModelParams, std::size_t>> updates;
    for (int k = 0; k < 4; ++k) {
        ModelParams p = nn::init_params(arch, 100 + k);
        updates.emplace_back(std::move(p), static_cast<std::size_t>(1 + (rng() % 40)));
    }
    const ModelParams base = fed::fedavg_aggregate(updates);

    std::vector<std::pair<ModelParams, std::size_t>> shuffled = updates;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const ModelParams perm = fed::fedavg_aggregate(shuffled);
    for (const auto& [name, t] : base.tensors) {
        const Tensor& u = perm.tensors.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t[i] == doctest::Approx(u[i]).epsilon(1e-12));
        }
    }

    std::vector<std::pair<ModelParams, std::size_t>> scaled = updates;
    for (auto& [p, n] : scaled) n *= 9;
    const ModelParams sc = fed::fedavg_aggregate(scaled);
    for (const auto& [name, t] : base.tensors) {
        CHECK(t.data == sc.tensors.at(name).data);  // weights are exact ratios
    }
}

TEST_CASE("aggregate rejects empty input and architecture mismatches") {
    CHECK_THROWS_AS(fed::fedavg_aggregate({}), ArgumentError);
    nn::Architecture a = small_config().arch;
    nn::Architecture b = a;
    b.hidden_dim += 1;
    CHECK_THROWS_AS(
        fed::fedavg_aggregate({{nn::init_params(a, 1), 1}, {nn::init_params(b, 1), 1}}),
        ShapeError);
}

TEST_CASE("local_train with lr 0 returns the global parameters bit-for-bit") {
    FederatedConfig cfg = small_config();
    cfg.lr = 0.0;
    cfg.arm = Arm::FedAvg;
    const auto shards = make_shards(2, 6, 1.0, 5, false, cfg.crl);
    const ModelParams global = nn::init_params(cfg.arch, 8);
    const fed::ClientUpdate update = fed::local_train(global, shards[0], cfg, 0);
    CHECK(params_equal(update.params, global));
    CHECK(update.sample_count == shards[0].samples.size());
}

TEST_CASE("fedavg arm matches a plain local SGD loop on the same stream") {
    FederatedConfig cfg = small_config();
    cfg.arm = Arm::FedAvg;
    const auto shards = make_shards(2, 6, 0.9, 21, false, cfg.crl);
    const ClientShard& shard = shards[1];
    const ModelParams global = nn::init_params(cfg.arch, 9);

    const fed::ClientUpdate update = fed::local_train(global, shard, cfg, 3);

    // Oracle: shuffled mini-batch SGD with CE only, same client stream.
    std::mt19937_64 rng(fed::client_stream_seed(cfg.seed, shard.client_id, 3));
    std::vector<int> order(shard.samples.size());
    std::iota(order.begin(), order.end(), 0);
    ModelParams params = global;
    double total = 0.0;
    int batches = 0;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const img::Image*> images;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                images.push_back(&shard.samples[order[i]].image);
                labels.push_back(shard.samples[order[i]].label);
            }
            const nn::LossValue loss = nn::backward_ce(params, data::to_batch(images), labels);
            params = nn::sgd_step(std::move(params), loss.gradients, cfg.lr, cfg.weight_decay);
            total += loss.scalar;
            ++batches;
        }
    }
    CHECK(params_equal(update.params, params));
    CHECK(update.metrics.total == doctest::Approx(total / batches).epsilon(1e-15));
    CHECK(update.metrics.ca == 0.0);
    CHECK(update.metrics.align == 0.0);
}

TEST_CASE("one client, one epoch, full batch equals a centralized step") {
    FederatedConfig cfg = small_config();
    cfg.arm = Arm::FedAvg;
    cfg.local_epochs = 1;
    cfg.batch_size = 1000;  // full batch
    const auto shards = make_shards(2, 4, 1.0, 33, false, cfg.crl);
    const ClientShard& shard = shards[0];
    const ModelParams global = nn::init_params(cfg.arch, 10);

    const fed::ClientUpdate update = fed::local_train(global, shard, cfg, 0);

    std::mt19937_64 rng(fed::client_stream_seed(cfg.seed, shard.client_id, 0));
    std::vector<int> order(shard.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<const img::Image*> images;
    std::vector<int> labels;
    for (int i : order) {
        images.push_back(&shard.samples[i].image);
        labels.push_back(shard.samples[i].label);
    }
    const nn::LossValue loss = nn::backward_ce(global, data::to_batch(images), labels);
    const ModelParams centralized = nn::sgd_step(global, loss.gradients, cfg.lr, cfg.weight_decay);
    CHECK(params_equal(update.params, centralized));
}

TEST_CASE("augmentation arms require a populated background pool") {
    FederatedConfig cfg = small_config();
    cfg.arm = Arm::CrlCaCe;
    const auto shards = make_shards(2, 6, 1.0, 5, false, cfg.crl);  // no pools
    const ModelParams global = nn::init_params(cfg.arch, 8);
    CHECK_THROWS_AS(fed::local_train(global, shards[0], cfg, 0), ArgumentError);
}

TEST_CASE("augmented local training consumes the pool and reports CA loss") {
    FederatedConfig cfg = small_config();
    cfg.arm = Arm::CrlCaCeAlign;
    cfg.align_weight = 0.1;
    std::vector<std::vector<crl::CausalSource>> sources;
    const auto shards = make_shards(2, 6, 1.0, 5, true, cfg.crl, &sources);
    const ModelParams global = nn::init_params(cfg.arch, 8);
    const fed::ClientUpdate update = fed::local_train(global, shards[0], cfg, 0, &sources[0]);
    CHECK(update.metrics.ca > 0.0);
    CHECK(update.metrics.align >= 0.0);
    CHECK(update.metrics.total > update.metrics.ce);
    CHECK(!params_equal(update.params, global));
}

TEST_CASE("run_rounds with zero rounds returns the initialization and no history") {
    FederatedConfig cfg = small_config();
    cfg.rounds = 0;
    const auto shards = make_shards(2, 6, 1.0, 5, false, cfg.crl);
    const fed::EvalSets sets = make_eval_sets(1.0, 900, cfg.crl);
    const fed::ServerState state = fed::run_rounds(cfg, shards, sets);
    CHECK(state.history.empty());
    CHECK(params_equal(state.global_params,
                       nn::init_params(cfg.arch, fed::derive_seed(cfg.seed, 0x696e6974))));
}

TEST_CASE("full sampling fraction aggregates every client each round") {
    FederatedConfig cfg = small_config();
    cfg.rounds = 1;
    cfg.sample_fraction = 1.0;
    const auto shards = make_shards(2, 6, 1.0, 5, false, cfg.crl);
    const fed::EvalSets sets = make_eval_sets(1.0, 900, cfg.crl);

    const fed::ServerState state = fed::run_rounds(cfg, shards, sets);
    REQUIRE(state.history.size() == 1);

    // Manual round: both clients train, sample-weighted average.
    const ModelParams init =
        nn::init_params(cfg.arch, fed::derive_seed(cfg.seed, 0x696e6974));
    const fed::ClientUpdate u0 = fed::local_train(init, shards[0], cfg, 0);
    const fed::ClientUpdate u1 = fed::local_train(init, shards[1], cfg, 0);
    const ModelParams manual = fed::fedavg_aggregate(
        {{u0.params, u0.sample_count}, {u1.params, u1.sample_count}});
    CHECK(params_equal(state.global_params, manual));
}

TEST_CASE("run_rounds is deterministic regardless of FEDCAUG_THREADS") {
    FederatedConfig cfg = small_config();
    cfg.num_clients = 3;
    cfg.rounds = 2;
    cfg.arm = Arm::CrlCaCe;
    std::vector<std::vector<crl::CausalSource>> sources;
    const auto shards = make_shards(3, 6, 0.95, 77, true, cfg.crl, &sources);
    const fed::EvalSets sets = make_eval_sets(0.95, 901, cfg.crl);

    setenv("FEDCAUG_THREADS", "1", 1);
    const fed::ServerState a = fed::run_rounds(cfg, shards, sets, &sources);
    setenv("FEDCAUG_THREADS", "4", 1);
    const fed::ServerState b = fed::run_rounds(cfg, shards, sets, &sources);
    unsetenv("FEDCAUG_THREADS");

    CHECK(params_equal(a.global_params, b.global_params));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t r = 0; r < a.history.size(); ++r) {
        CHECK(a.history[r].mean_train_loss == b.history[r].mean_train_loss);
        CHECK(a.history[r].mean_ce == b.history[r].mean_ce);
        CHECK(a.history[r].mean_ca == b.history[r].mean_ca);
        CHECK(a.history[r].mean_align == b.history[r].mean_align);
        CHECK(a.history[r].id_accuracy == b.history[r].id_accuracy);
        CHECK(a.history[r].ood_accuracy == b.history[r].ood_accuracy);
        CHECK(a.history[r].background_confidence == b.history[r].background_confidence);
    }
}

TEST_CASE("run_rounds surfaces client failures with round and client context") {
    FederatedConfig cfg = small_config();
    cfg.arm = Arm::CrlCaCe;  // pools missing -> client error
    const auto shards = make_shards(2, 6, 1.0, 5, false, cfg.crl);
    fed::EvalSets sets = make_eval_sets(1.0, 900, cfg.crl);
    std::vector<std::vector<crl::CausalSource>> empty_sources(2);
    try {
        fed::run_rounds(cfg, shards, sets, &empty_sources);
        FAIL("expected Error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("client") != std::string::npos);
        CHECK(msg.find("round 0") != std::string::npos);
    }
}

TEST_CASE("training reduces the mean loss from the first to the last round") {
    FederatedConfig cfg = small_config();
    cfg.rounds = 4;
    cfg.local_epochs = 2;
    cfg.lr = 0.05;
    const auto shards = make_shards(2, 10, 1.0, 13, false, cfg.crl);
    const fed::EvalSets sets = make_eval_sets(1.0, 902, cfg.crl);
    const fed::ServerState state = fed::run_rounds(cfg, shards, sets);
    REQUIRE(state.history.size() == 4);
    CHECK(state.history.back().mean_train_loss < state.history.front().mean_train_loss);
}

TEST_CASE("without a confound, augmentation neither helps nor hurts OOD much") {
    // rho = 0: backgrounds carry no label signal, so fedavg and the
    // augmentation arm should land within a few points of each other once
    // both are near saturation.
    FederatedConfig cfg = small_config();
    cfg.num_clients = 3;
    cfg.rounds = 12;
    cfg.local_epochs = 3;
    cfg.batch_size = 32;
    cfg.lr = 0.04;
    cfg.arch.conv_channels = 8;
    cfg.arch.hidden_dim = 32;

    data::SpuriousSpec spec;
    spec.train_correlation = 0.0;

    double fedavg_mean = 0.0, aug_mean = 0.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        cfg.seed = seed;
        auto samples = data::synth_colored_digits(spec, 60, seed * 13 + 7);
        auto shards = data::dirichlet_partition(samples, 3, 0.5, seed * 13 + 8);
        std::vector<std::vector<crl::CausalSource>> sources(shards.size());
        for (std::size_t k = 0; k < shards.size(); ++k) {
            shards[k] = data::build_background_pool(std::move(shards[k]), cfg.crl, &sources[k]);
        }
        fed::EvalSets sets;
        sets.id_set = data::synth_colored_digits(spec, 20, seed * 31 + 5);
        sets.ood_set = data::make_ood_test_split(spec, 20, seed * 31 + 6);
        sets.probe = eval::prepare_probe_inputs(sets.ood_set, cfg.crl, 10);

        cfg.arm = Arm::FedAvg;
        fedavg_mean += fed::run_rounds(cfg, shards, sets).history.back().ood_accuracy;
        cfg.arm = Arm::CrlCaCe;
        aug_mean += fed::run_rounds(cfg, shards, sets, &sources).history.back().ood_accuracy;
    }
    fedavg_mean /= 3.0;
    aug_mean /= 3.0;
    CHECK(fedavg_mean > 0.9);
    CHECK(aug_mean > 0.9);
    CHECK(std::abs(fedavg_mean - aug_mean) <= 0.05);
}
