#include "fedcaug/fedsim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <numeric>
#include <random>
#include <thread>

#include "fedcaug/error.hpp"

namespace fedcaug::fed {

namespace {

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kInitTag = 0x696e6974;    // "init"
constexpr std::uint64_t kSelectTag = 0x73656c65;  // "sele"

std::string arch_string(const nn::Architecture& a) {
    return std::to_string(a.in_channels) + "x" + std::to_string(a.in_height) + "x" +
           std::to_string(a.in_width) + " conv" + std::to_string(a.conv_channels) + " k" +
           std::to_string(a.kernel) + " h" + std::to_string(a.hidden_dim) + " c" +
           std::to_string(a.num_classes);
}

void validate_config(const FederatedConfig& cfg) {
    if (cfg.num_clients < 1) throw ArgumentError("num_clients must be >= 1");
    if (cfg.rounds < 0) throw ArgumentError("rounds must be >= 0");
    if (cfg.local_epochs < 1) throw ArgumentError("local_epochs must be >= 1");
    if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (cfg.lr < 0.0) throw ArgumentError("lr must be >= 0");
    if (cfg.weight_decay < 0.0) throw ArgumentError("weight_decay must be >= 0");
    if (cfg.sample_fraction <= 0.0 || cfg.sample_fraction > 1.0) {
        throw ArgumentError("sample_fraction must lie in (0,1]");
    }
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ArgumentError("alpha must lie in [0,1]");
    if (cfg.align_weight < 0.0) throw ArgumentError("align_weight must be >= 0");
}

}  // namespace

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::FedAvg: return "fedavg";
        case Arm::CrlCaCe: return "crl_ca_ce";
        case Arm::CrlCaCeAlign: return "crl_ca_ce_align";
    }
    return "unknown";
}

std::optional<Arm> parse_arm(const std::string& name) {
    if (name == "fedavg") return Arm::FedAvg;
    if (name == "crl_ca_ce") return Arm::CrlCaCe;
    if (name == "crl_ca_ce_align") return Arm::CrlCaCeAlign;
    return std::nullopt;
}

std::uint64_t client_stream_seed(std::uint64_t seed, int client_id, int round) {
    return mix64(mix64(seed, static_cast<std::uint64_t>(round) + 1),
                 static_cast<std::uint64_t>(client_id) + 1);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return mix64(seed, tag); }

int max_client_threads() {
    if (const char* env = std::getenv("FEDCAUG_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
        return 1;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

ClientUpdate local_train(const nn::ModelParams& global_params, const data::ClientShard& shard,
                         const FederatedConfig& cfg, int round,
                         const std::vector<crl::CausalSource>* sources) {
    validate_config(cfg);
    if (shard.samples.empty()) {
        throw ArgumentError("local_train: client " + std::to_string(shard.client_id) +
                            " has no samples");
    }
    const bool augment = cfg.arm != Arm::FedAvg;
    if (augment && shard.background_pool.empty()) {
        throw ArgumentError("local_train: client " + std::to_string(shard.client_id) +
                            " has an empty background pool for arm " + arm_name(cfg.arm));
    }

    // Causal sources are deterministic per sample; compute once when the
    // caller did not hand over a cache.
    std::vector<crl::CausalSource> own_sources;
    if (augment && sources == nullptr) {
        own_sources.reserve(shard.samples.size());
        for (const auto& s : shard.samples) {
            own_sources.push_back(crl::sharpen_and_localize(s.image, cfg.crl));
        }
        sources = &own_sources;
    }
    if (augment && sources->size() != shard.samples.size()) {
        throw ArgumentError("local_train: cached sources do not match shard size");
    }

    std::mt19937_64 rng(client_stream_seed(cfg.seed, shard.client_id, round));
    std::uniform_int_distribution<std::size_t> pool_pick(0, shard.background_pool.size() - 1);

    // With per-epoch resampling off, each sample keeps one donor background.
    std::vector<std::size_t> fixed_pairing;
    if (augment && !cfg.resample_augmentation_per_epoch) {
        fixed_pairing.resize(shard.samples.size());
        for (auto& idx : fixed_pairing) idx = pool_pick(rng);
    }

    ClientUpdate update;
    update.params = global_params;
    update.sample_count = shard.samples.size();

    const int n = static_cast<int>(shard.samples.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    const double align_weight = cfg.arm == Arm::CrlCaCeAlign ? cfg.align_weight : 0.0;

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);

            std::vector<const img::Image*> batch_images;
            std::vector<int> labels;
            batch_images.reserve(end - start);
            labels.reserve(end - start);
            for (int i = start; i < end; ++i) {
                batch_images.push_back(&shard.samples[order[i]].image);
                labels.push_back(shard.samples[order[i]].label);
            }
            const nn::Tensor batch = data::to_batch(batch_images);

            nn::LossValue loss;
            if (augment) {
                std::vector<img::Image> composites;
                composites.reserve(end - start);
                for (int i = start; i < end; ++i) {
                    const int s = order[i];
                    const crl::CausalSource& src = (*sources)[s];
                    const std::size_t donor = cfg.resample_augmentation_per_epoch
                                                  ? pool_pick(rng)
                                                  : fixed_pairing[s];
                    const img::Image object = crl::extract_object(src.sharpened, src.region);
                    composites.push_back(img::composite(object, src.region.mask,
                                                        shard.background_pool[donor], cfg.alpha));
                }
                std::vector<const img::Image*> aug_images;
                aug_images.reserve(composites.size());
                for (const auto& im : composites) aug_images.push_back(&im);
                const nn::Tensor aug_batch = data::to_batch(aug_images);
                // Counterfactuals keep the labels of their source images.
                loss = nn::backward(update.params, batch, labels, aug_batch, labels, align_weight);
            } else {
                loss = nn::backward_ce(update.params, batch, labels);
            }

            update.params = nn::sgd_step(std::move(update.params), loss.gradients, cfg.lr,
                                         cfg.weight_decay);
            update.metrics.total += loss.scalar;
            update.metrics.ce += loss.ce;
            update.metrics.ca += loss.ca;
            update.metrics.align += loss.align;
            update.metrics.batches += 1;
        }
    }

    if (update.metrics.batches > 0) {
        update.metrics.total /= update.metrics.batches;
        update.metrics.ce /= update.metrics.batches;
        update.metrics.ca /= update.metrics.batches;
        update.metrics.align /= update.metrics.batches;
    }
    return update;
}

nn::ModelParams fedavg_aggregate(
    const std::vector<std::pair<nn::ModelParams, std::size_t>>& updates) {
    if (updates.empty()) throw ArgumentError("fedavg_aggregate: no updates");
    const nn::Architecture& arch = updates.front().first.arch;
    std::size_t total = 0;
    for (const auto& [params, count] : updates) {
        if (!(params.arch == arch)) {
            throw ShapeError("fedavg_aggregate architecture", arch_string(arch),
                             arch_string(params.arch));
        }
        total += count;
    }
    if (total == 0) throw ArgumentError("fedavg_aggregate: zero total sample count");

    nn::ModelParams out;
    out.arch = arch;
    for (const auto& [name, t] : updates.front().first.tensors) {
        out.tensors.emplace(name, nn::Tensor(t.shape));
    }
    for (const auto& [params, count] : updates) {
        const double w = static_cast<double>(count) / static_cast<double>(total);
        for (const auto& [name, t] : params.tensors) {
            nn::Tensor& acc = out.tensors.at(name);
            if (!nn::same_shape(acc, t)) {
                throw ShapeError("fedavg_aggregate '" + name + "'", nn::shape_string(acc.shape),
                                 nn::shape_string(t.shape));
            }
            for (std::size_t i = 0; i < t.size(); ++i) acc[i] += w * t[i];
        }
    }
    return out;
}

ServerState run_rounds(const FederatedConfig& cfg, const std::vector<data::ClientShard>& shards,
                       const EvalSets& eval_sets,
                       const std::vector<std::vector<crl::CausalSource>>* sources) {
    validate_config(cfg);
    if (static_cast<int>(shards.size()) != cfg.num_clients) {
        throw ArgumentError("run_rounds: expected " + std::to_string(cfg.num_clients) +
                            " shards, got " + std::to_string(shards.size()));
    }
    if (eval_sets.id_set.empty() || eval_sets.ood_set.empty()) {
        throw ArgumentError("run_rounds: evaluation sets must be nonempty");
    }
    const bool augment = cfg.arm != Arm::FedAvg;

    // Masks are input-deterministic: compute them once up front when the
    // caller has no cache, in parallel across clients.
    std::vector<std::vector<crl::CausalSource>> own_sources;
    if (augment && sources == nullptr) {
        own_sources.resize(shards.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t c = next.fetch_add(1); c < shards.size(); c = next.fetch_add(1)) {
                own_sources[c].reserve(shards[c].samples.size());
                for (const auto& s : shards[c].samples) {
                    own_sources[c].push_back(crl::sharpen_and_localize(s.image, cfg.crl));
                }
            }
        };
        const int threads = std::min<int>(max_client_threads(), static_cast<int>(shards.size()));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        sources = &own_sources;
    }

    ServerState state;
    state.global_params = nn::init_params(cfg.arch, mix64(cfg.seed, kInitTag));

    const int selected_count =
        std::max(1, static_cast<int>(std::ceil(cfg.sample_fraction * cfg.num_clients)));

    for (int round = 0; round < cfg.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<int> ids(cfg.num_clients);
        std::iota(ids.begin(), ids.end(), 0);
        std::mt19937_64 select_rng(mix64(cfg.seed, mix64(kSelectTag, round)));
        std::shuffle(ids.begin(), ids.end(), select_rng);
        std::vector<int> selected(ids.begin(), ids.begin() + selected_count);
        std::sort(selected.begin(), selected.end());

        std::vector<ClientUpdate> updates(selected.size());
        std::vector<std::exception_ptr> errors(selected.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t i = next.fetch_add(1); i < selected.size(); i = next.fetch_add(1)) {
                const int c = selected[i];
                try {
                    updates[i] = local_train(state.global_params, shards[c], cfg, round,
                                             sources ? &(*sources)[c] : nullptr);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        const int threads = std::min<int>(max_client_threads(), static_cast<int>(selected.size()));
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        for (std::size_t i = 0; i < selected.size(); ++i) {
            if (errors[i]) {
                try {
                    std::rethrow_exception(errors[i]);
                } catch (const std::exception& e) {
                    throw Error("round " + std::to_string(round) + ", client " +
                                std::to_string(selected[i]) + ": " + e.what());
                }
            }
        }

        std::vector<std::pair<nn::ModelParams, std::size_t>> weighted;
        weighted.reserve(updates.size());
        std::size_t total_samples = 0;
        for (auto& u : updates) {
            total_samples += u.sample_count;
            weighted.emplace_back(std::move(u.params), u.sample_count);
        }
        state.global_params = fedavg_aggregate(weighted);
        state.round_index = round + 1;

        RoundReport report;
        report.round_index = round;
        for (std::size_t i = 0; i < updates.size(); ++i) {
            const double w = static_cast<double>(updates[i].sample_count) /
                             static_cast<double>(total_samples);
            report.mean_train_loss += w * updates[i].metrics.total;
            report.mean_ce += w * updates[i].metrics.ce;
            report.mean_ca += w * updates[i].metrics.ca;
            report.mean_align += w * updates[i].metrics.align;
        }
        // The three evaluations are independent reads of the new global
        // params; overlap them when a second core is allowed.
        if (max_client_threads() > 1) {
            auto id_future = std::async(std::launch::async, [&]() {
                return eval::top1_accuracy(state.global_params, eval_sets.id_set);
            });
            auto probe_future = std::async(std::launch::async, [&]() {
                return eval::probe_prepared(state.global_params, eval_sets.probe).mean_confidence;
            });
            report.ood_accuracy = eval::top1_accuracy(state.global_params, eval_sets.ood_set);
            report.id_accuracy = id_future.get();
            report.background_confidence = probe_future.get();
        } else {
            report.id_accuracy = eval::top1_accuracy(state.global_params, eval_sets.id_set);
            report.ood_accuracy = eval::top1_accuracy(state.global_params, eval_sets.ood_set);
            report.background_confidence =
                eval::probe_prepared(state.global_params, eval_sets.probe).mean_confidence;
        }
        report.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.history.push_back(report);
    }
    return state;
}

}  // namespace fedcaug::fed
