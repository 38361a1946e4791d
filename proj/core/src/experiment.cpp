#include "fedcaug/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedcaug/error.hpp"
#include "fedcaug/params_io.hpp"
#include "fedcaug/pnm.hpp"
#include "fedcaug/version.hpp"

namespace fedcaug::cli {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTrainTag = 0x7472;
constexpr std::uint64_t kIdEvalTag = 0x6964;
constexpr std::uint64_t kOodTag = 0x6f6f;
constexpr std::uint64_t kPartitionTag = 0x7061;
constexpr std::uint64_t kExportTag = 0x6578;

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

int line_of_offset(const std::string& text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

// Typed field access over one JSON object, with unknown-key detection.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(&obj), path_(std::move(path)) {
        if (!obj.is_object()) throw ConfigError(path_, "expected a JSON object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& item : obj_->items()) {
            bool known = false;
            for (const char* k : keys) known = known || item.key() == k;
            if (!known) throw ConfigError(path_ + "." + item.key(), "unknown field");
        }
    }

    bool has(const char* key) const { return obj_->contains(key); }

    const json& raw(const char* key) const { return (*obj_)[key]; }

    double number(const char* key, double def) const {
        if (!has(key)) return def;
        if (!raw(key).is_number()) throw ConfigError(path_ + "." + key, "expected a number");
        return raw(key).get<double>();
    }
    int integer(const char* key, int def) const {
        if (!has(key)) return def;
        if (!raw(key).is_number_integer()) throw ConfigError(path_ + "." + key, "expected an integer");
        return raw(key).get<int>();
    }
    bool boolean(const char* key, bool def) const {
        if (!has(key)) return def;
        if (!raw(key).is_boolean()) throw ConfigError(path_ + "." + key, "expected a boolean");
        return raw(key).get<bool>();
    }
    std::string str(const char* key, const std::string& def) const {
        if (!has(key)) return def;
        if (!raw(key).is_string()) throw ConfigError(path_ + "." + key, "expected a string");
        return raw(key).get<std::string>();
    }
    const std::string& path() const { return path_; }

private:
    const json* obj_;
    std::string path_;
};

void check_range(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw ConfigError(field, rule);
}

ExperimentConfig build_config(const json& root) {
    Section top(root, "config");
    top.allow({"dataset", "federated", "crl", "model", "arms", "seeds", "output_dir"});

    ExperimentConfig cfg;

    if (top.has("dataset")) {
        Section ds(top.raw("dataset"), "dataset");
        ds.allow({"source", "num_classes", "num_backgrounds", "train_correlation", "ood_policy",
                  "train_per_class", "eval_per_class", "dirichlet_beta", "idx_images",
                  "idx_labels", "idx_holdout_fraction"});
        cfg.dataset.source = ds.str("source", "synthetic");
        if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "idx") {
            throw ConfigError("dataset.source", "must be 'synthetic' or 'idx'");
        }
        if (cfg.dataset.source == "synthetic") {
            if (ds.has("idx_images") || ds.has("idx_labels")) {
                throw ConfigError("dataset", "exactly one source: synthetic config must not name IDX paths");
            }
        } else {
            if (!ds.has("idx_images") || !ds.has("idx_labels")) {
                throw ConfigError("dataset", "idx source requires idx_images and idx_labels");
            }
            cfg.dataset.idx_images = ds.str("idx_images", "");
            cfg.dataset.idx_labels = ds.str("idx_labels", "");
        }
        cfg.dataset.spurious.num_classes = ds.integer("num_classes", 10);
        cfg.dataset.spurious.num_backgrounds = ds.integer("num_backgrounds", 10);
        cfg.dataset.spurious.train_correlation = ds.number("train_correlation", 0.95);
        const std::string policy = ds.str("ood_policy", "uniform");
        if (policy == "uniform") {
            cfg.dataset.spurious.ood_policy = data::OodPolicy::Uniform;
        } else if (policy == "anti_correlated") {
            cfg.dataset.spurious.ood_policy = data::OodPolicy::AntiCorrelated;
        } else {
            throw ConfigError("dataset.ood_policy", "must be 'uniform' or 'anti_correlated'");
        }
        cfg.dataset.train_per_class = ds.integer("train_per_class", 80);
        cfg.dataset.eval_per_class = ds.integer("eval_per_class", 50);
        cfg.dataset.dirichlet_beta = ds.number("dirichlet_beta", 0.5);
        cfg.dataset.idx_holdout_fraction = ds.number("idx_holdout_fraction", 0.1);

        check_range(cfg.dataset.spurious.num_classes >= 1 && cfg.dataset.spurious.num_classes <= 10,
                    "dataset.num_classes", "must lie in [1,10]");
        check_range(cfg.dataset.spurious.num_backgrounds >= 2, "dataset.num_backgrounds",
                    "must be >= 2");
        check_range(cfg.dataset.spurious.train_correlation >= 0.0 &&
                        cfg.dataset.spurious.train_correlation <= 1.0,
                    "dataset.train_correlation", "must lie in [0,1]");
        check_range(cfg.dataset.train_per_class >= 1, "dataset.train_per_class", "must be >= 1");
        check_range(cfg.dataset.eval_per_class >= 1, "dataset.eval_per_class", "must be >= 1");
        check_range(cfg.dataset.dirichlet_beta > 0.0, "dataset.dirichlet_beta", "must be > 0");
        check_range(cfg.dataset.idx_holdout_fraction > 0.0 && cfg.dataset.idx_holdout_fraction < 1.0,
                    "dataset.idx_holdout_fraction", "must lie in (0,1)");
    }

    if (top.has("federated")) {
        Section fd(top.raw("federated"), "federated");
        fd.allow({"num_clients", "rounds", "local_epochs", "batch_size", "lr", "weight_decay",
                  "sample_fraction", "alpha", "align_weight", "resample_augmentation_per_epoch"});
        cfg.federated.num_clients = fd.integer("num_clients", 5);
        cfg.federated.rounds = fd.integer("rounds", 20);
        cfg.federated.local_epochs = fd.integer("local_epochs", 5);
        cfg.federated.batch_size = fd.integer("batch_size", 64);
        cfg.federated.lr = fd.number("lr", 0.005);
        cfg.federated.weight_decay = fd.number("weight_decay", 0.01);
        cfg.federated.sample_fraction = fd.number("sample_fraction", 1.0);
        cfg.federated.alpha = fd.number("alpha", 0.9);
        cfg.federated.align_weight = fd.number("align_weight", 0.1);
        cfg.federated.resample_augmentation_per_epoch =
            fd.boolean("resample_augmentation_per_epoch", true);

        check_range(cfg.federated.num_clients >= 2, "federated.num_clients", "must be >= 2");
        check_range(cfg.federated.rounds >= 0, "federated.rounds", "must be >= 0");
        check_range(cfg.federated.local_epochs >= 1, "federated.local_epochs", "must be >= 1");
        check_range(cfg.federated.batch_size >= 1, "federated.batch_size", "must be >= 1");
        check_range(cfg.federated.lr >= 0.0, "federated.lr", "must be >= 0");
        check_range(cfg.federated.weight_decay >= 0.0, "federated.weight_decay", "must be >= 0");
        check_range(cfg.federated.sample_fraction > 0.0 && cfg.federated.sample_fraction <= 1.0,
                    "federated.sample_fraction", "must lie in (0,1]");
        check_range(cfg.federated.alpha >= 0.0 && cfg.federated.alpha <= 1.0, "federated.alpha",
                    "must lie in [0,1]");
        check_range(cfg.federated.align_weight >= 0.0, "federated.align_weight", "must be >= 0");
    }

    if (top.has("crl")) {
        Section cr(top.raw("crl"), "crl");
        cr.allow({"backend", "threshold_level", "spectral_window", "canny_sigma", "canny_low",
                  "canny_high", "lambda_weighted"});
        const std::string backend = cr.str("backend", "threshold");
        if (backend == "threshold") {
            cfg.federated.crl.backend.kind = crl::BackendKind::Threshold;
        } else if (backend == "spectral_residual") {
            cfg.federated.crl.backend.kind = crl::BackendKind::SpectralResidual;
        } else {
            throw ConfigError("crl.backend", "must be 'threshold' or 'spectral_residual'");
        }
        cfg.federated.crl.backend.threshold_level = cr.number("threshold_level", 0.25);
        cfg.federated.crl.backend.spectral_window = cr.integer("spectral_window", 3);
        cfg.federated.crl.canny_sigma = cr.number("canny_sigma", 1.0);
        cfg.federated.crl.canny_low = cr.number("canny_low", 0.1);
        cfg.federated.crl.canny_high = cr.number("canny_high", 0.3);
        cfg.federated.crl.lambda_weighted = cr.number("lambda_weighted", 0.3);

        check_range(cfg.federated.crl.backend.threshold_level > 0.0 &&
                        cfg.federated.crl.backend.threshold_level < 1.0,
                    "crl.threshold_level", "must lie in (0,1)");
        check_range(cfg.federated.crl.backend.spectral_window >= 3 &&
                        cfg.federated.crl.backend.spectral_window % 2 == 1,
                    "crl.spectral_window", "must be odd and >= 3");
        check_range(cfg.federated.crl.canny_sigma > 0.0, "crl.canny_sigma", "must be > 0");
        check_range(0.0 < cfg.federated.crl.canny_low &&
                        cfg.federated.crl.canny_low < cfg.federated.crl.canny_high &&
                        cfg.federated.crl.canny_high <= 1.0,
                    "crl.canny_low", "thresholds must satisfy 0 < low < high <= 1");
        check_range(cfg.federated.crl.lambda_weighted >= 0.0 &&
                        cfg.federated.crl.lambda_weighted <= 1.0,
                    "crl.lambda_weighted", "must lie in [0,1]");
    }

    if (top.has("model")) {
        Section md(top.raw("model"), "model");
        md.allow({"conv_channels", "hidden_dim", "kernel"});
        cfg.federated.arch.conv_channels = md.integer("conv_channels", 16);
        cfg.federated.arch.hidden_dim = md.integer("hidden_dim", 64);
        cfg.federated.arch.kernel = md.integer("kernel", 3);
        check_range(cfg.federated.arch.conv_channels >= 1, "model.conv_channels", "must be >= 1");
        check_range(cfg.federated.arch.hidden_dim >= 1, "model.hidden_dim", "must be >= 1");
        check_range(cfg.federated.arch.kernel >= 1 && cfg.federated.arch.kernel <= 7 &&
                        cfg.federated.arch.kernel % 2 == 1,
                    "model.kernel", "must be odd and in [1,7]");
    }

    if (top.has("arms")) {
        if (!top.raw("arms").is_array() || top.raw("arms").empty()) {
            throw ConfigError("arms", "must be a nonempty array");
        }
        cfg.arms.clear();
        for (const auto& a : top.raw("arms")) {
            if (!a.is_string()) throw ConfigError("arms", "entries must be strings");
            const auto arm = fed::parse_arm(a.get<std::string>());
            if (!arm) {
                throw ConfigError("arms", "unknown arm '" + a.get<std::string>() +
                                              "' (fedavg | crl_ca_ce | crl_ca_ce_align)");
            }
            cfg.arms.push_back(*arm);
        }
    }

    if (top.has("seeds")) {
        if (!top.raw("seeds").is_array() || top.raw("seeds").empty()) {
            throw ConfigError("seeds", "must be a nonempty array");
        }
        cfg.seeds.clear();
        for (const auto& s : top.raw("seeds")) {
            if (!s.is_number_integer() || s.get<long long>() < 0) {
                throw ConfigError("seeds", "entries must be nonnegative integers");
            }
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    }

    cfg.output_dir = top.str("output_dir", "out");
    return cfg;
}

// Everything one seed's runs share across arms.
struct PreparedData {
    std::vector<data::ClientShard> shards;  // no pools yet
    std::vector<data::LabeledImage> id_set;
    std::vector<data::LabeledImage> ood_set;
    nn::Architecture arch;
    int num_backgrounds = 0;
    std::vector<data::ManifestEntry> manifest;
};

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    PreparedData prep;
    prep.arch = cfg.federated.arch;

    if (cfg.dataset.source == "synthetic") {
        const data::SpuriousSpec& spec = cfg.dataset.spurious;
        std::vector<data::LabeledImage> train = data::synth_colored_digits(
            spec, cfg.dataset.train_per_class, fed::derive_seed(seed, kTrainTag));
        prep.id_set = data::synth_colored_digits(spec, cfg.dataset.eval_per_class,
                                                 fed::derive_seed(seed, kIdEvalTag));
        prep.ood_set = data::make_ood_test_split(spec, cfg.dataset.eval_per_class,
                                                 fed::derive_seed(seed, kOodTag));
        prep.shards = data::dirichlet_partition(train, cfg.federated.num_clients,
                                                cfg.dataset.dirichlet_beta,
                                                fed::derive_seed(seed, kPartitionTag));
        prep.arch.in_channels = 3;
        prep.arch.in_height = 28;
        prep.arch.in_width = 28;
        prep.arch.num_classes = spec.num_classes;
        prep.num_backgrounds = spec.num_backgrounds;
    } else {
        std::vector<data::LabeledImage> all =
            data::load_idx(cfg.dataset.idx_images, cfg.dataset.idx_labels);
        if (all.size() < 2) throw ArgumentError("idx dataset too small");
        std::mt19937_64 rng(fed::derive_seed(seed, kPartitionTag));
        std::shuffle(all.begin(), all.end(), rng);
        const std::size_t holdout = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(cfg.dataset.idx_holdout_fraction *
                                                     static_cast<double>(all.size()))));
        prep.id_set.assign(all.end() - holdout, all.end());
        prep.ood_set = prep.id_set;  // no background notion: OOD mirrors ID
        std::vector<data::LabeledImage> train(all.begin(), all.end() - holdout);
        prep.shards = data::dirichlet_partition(train, cfg.federated.num_clients,
                                                cfg.dataset.dirichlet_beta,
                                                fed::derive_seed(seed, kTrainTag));
        int max_label = 0;
        for (const auto& s : train) max_label = std::max(max_label, s.label);
        prep.arch.in_channels = 1;
        prep.arch.in_height = train.front().image.height;
        prep.arch.in_width = train.front().image.width;
        prep.arch.num_classes = max_label + 1;
        prep.num_backgrounds = 0;
    }

    for (const auto& shard : prep.shards) {
        for (const auto& s : shard.samples) {
            prep.manifest.push_back({s.image.provenance, s.label, s.background_id, "train",
                                     shard.client_id});
        }
    }
    for (const auto& s : prep.id_set) {
        prep.manifest.push_back({s.image.provenance, s.label, s.background_id, "id_eval", -1});
    }
    for (const auto& s : prep.ood_set) {
        prep.manifest.push_back({s.image.provenance, s.label, s.background_id, "ood_eval", -1});
    }
    return prep;
}

struct SeedRuns {
    PreparedData prep;
    fed::EvalSets eval_sets;
    // Lazily built pooled shards + cached sources, shared by augmentation arms.
    bool pools_ready = false;
    std::vector<data::ClientShard> pooled_shards;
    std::vector<std::vector<crl::CausalSource>> sources;
};

RunResult run_one(const ExperimentConfig& cfg, SeedRuns& ctx, fed::Arm arm, std::uint64_t seed) {
    fed::FederatedConfig fedcfg = cfg.federated;
    fedcfg.arm = arm;
    fedcfg.seed = seed;
    fedcfg.arch = ctx.prep.arch;

    const bool augment = arm != fed::Arm::FedAvg;
    if (augment && !ctx.pools_ready) {
        ctx.pooled_shards.clear();
        ctx.sources.assign(ctx.prep.shards.size(), {});
        for (std::size_t k = 0; k < ctx.prep.shards.size(); ++k) {
            ctx.pooled_shards.push_back(
                data::build_background_pool(ctx.prep.shards[k], fedcfg.crl, &ctx.sources[k]));
        }
        ctx.pools_ready = true;
    }

    const std::vector<data::ClientShard>& shards = augment ? ctx.pooled_shards : ctx.prep.shards;
    fed::ServerState state =
        fed::run_rounds(fedcfg, shards, ctx.eval_sets, augment ? &ctx.sources : nullptr);

    RunResult result;
    result.arm = arm;
    result.seed = seed;
    result.history = state.history;
    result.probe = eval::probe_prepared(state.global_params, ctx.eval_sets.probe);
    result.confusion = eval::confusion_matrix(state.global_params, ctx.prep.ood_set);
    result.final_id_accuracy = eval::top1_accuracy(state.global_params, ctx.prep.id_set);
    result.final_ood_accuracy = eval::top1_accuracy(state.global_params, ctx.prep.ood_set);
    result.final_params = std::move(state.global_params);
    return result;
}

void append_history_rows(std::string& out, const RunResult& run) {
    for (const auto& r : run.history) {
        out += std::to_string(r.round_index) + "," + fed::arm_name(run.arm) + "," +
               std::to_string(run.seed) + "," + fmt("%.6f", r.mean_train_loss) + "," +
               fmt("%.6f", r.mean_ce) + "," + fmt("%.6f", r.mean_ca) + "," +
               fmt("%.6f", r.mean_align) + "," + fmt("%.6f", r.id_accuracy) + "," +
               fmt("%.6f", r.ood_accuracy) + "," + fmt("%.6f", r.background_confidence) + "," +
               fmt("%.3f", r.seconds) + "\n";
    }
}

struct ArmStats {
    std::vector<double> id, ood, conf, cconf, match;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<std::pair<fed::Arm, ArmStats>> collect_stats(const ExperimentResult& result) {
    std::vector<std::pair<fed::Arm, ArmStats>> stats;
    for (const auto& run : result.runs) {
        auto it = std::find_if(stats.begin(), stats.end(),
                               [&](const auto& p) { return p.first == run.arm; });
        if (it == stats.end()) {
            stats.emplace_back(run.arm, ArmStats{});
            it = std::prev(stats.end());
        }
        it->second.id.push_back(run.final_id_accuracy);
        it->second.ood.push_back(run.final_ood_accuracy);
        it->second.conf.push_back(run.probe.mean_confidence);
        it->second.cconf.push_back(run.probe.confound_confidence);
        it->second.match.push_back(run.probe.confound_match_rate);
    }
    return stats;
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<json>", "parse error at line " +
                                        std::to_string(line_of_offset(text, e.byte)) + ": " +
                                        e.what());
    }
    return build_config(root);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("<file>", "cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_json(ss.str());
}

ExperimentResult run_experiment_config(const ExperimentConfig& cfg) {
    ExperimentResult result;
    for (std::uint64_t seed : cfg.seeds) {
        SeedRuns ctx;
        ctx.prep = prepare_data(cfg, seed);
        ctx.eval_sets.id_set = ctx.prep.id_set;
        ctx.eval_sets.ood_set = ctx.prep.ood_set;
        // Probe on in-distribution samples: their backgrounds follow the
        // training confound, which is exactly the association the probe
        // measures.
        ctx.eval_sets.probe = eval::prepare_probe_inputs(ctx.prep.id_set, cfg.federated.crl,
                                                         ctx.prep.num_backgrounds);
        for (fed::Arm arm : cfg.arms) {
            result.runs.push_back(run_one(cfg, ctx, arm, seed));
        }
    }
    return result;
}

std::string rounds_csv(const ExperimentResult& result) {
    std::string out = "round,arm,seed,train_loss,ce,ca,align,id_acc,ood_acc,bg_conf,secs\n";
    for (const auto& run : result.runs) append_history_rows(out, run);
    return out;
}

std::string summary_csv(const ExperimentResult& result) {
    std::string out = "arm,seed,id_acc,ood_acc,bg_conf,confound_conf,confound_match\n";
    for (const auto& run : result.runs) {
        out += fed::arm_name(run.arm) + "," + std::to_string(run.seed) + "," +
               fmt("%.6f", run.final_id_accuracy) + "," + fmt("%.6f", run.final_ood_accuracy) +
               "," + fmt("%.6f", run.probe.mean_confidence) + "," +
               fmt("%.6f", run.probe.confound_confidence) + "," +
               fmt("%.6f", run.probe.confound_match_rate) + "\n";
    }
    for (const auto& [arm, st] : collect_stats(result)) {
        out += fed::arm_name(arm) + ",mean," + fmt("%.6f", mean_of(st.id)) + "," +
               fmt("%.6f", mean_of(st.ood)) + "," + fmt("%.6f", mean_of(st.conf)) + "," +
               fmt("%.6f", mean_of(st.cconf)) + "," + fmt("%.6f", mean_of(st.match)) + "\n";
        out += fed::arm_name(arm) + ",std," + fmt("%.6f", std_of(st.id)) + "," +
               fmt("%.6f", std_of(st.ood)) + "," + fmt("%.6f", std_of(st.conf)) + "," +
               fmt("%.6f", std_of(st.cconf)) + "," + fmt("%.6f", std_of(st.match)) + "\n";
    }
    return out;
}

std::string report_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
    json root;
    root["version"] = FEDCAUG_VERSION;
    root["config"] = {
        {"dataset_source", cfg.dataset.source},
        {"num_classes", cfg.dataset.spurious.num_classes},
        {"num_backgrounds", cfg.dataset.spurious.num_backgrounds},
        {"train_correlation", cfg.dataset.spurious.train_correlation},
        {"train_per_class", cfg.dataset.train_per_class},
        {"eval_per_class", cfg.dataset.eval_per_class},
        {"dirichlet_beta", cfg.dataset.dirichlet_beta},
        {"num_clients", cfg.federated.num_clients},
        {"rounds", cfg.federated.rounds},
        {"local_epochs", cfg.federated.local_epochs},
        {"batch_size", cfg.federated.batch_size},
        {"lr", cfg.federated.lr},
        {"weight_decay", cfg.federated.weight_decay},
        {"alpha", cfg.federated.alpha},
        {"lambda_weighted", cfg.federated.crl.lambda_weighted},
        {"align_weight", cfg.federated.align_weight},
    };
    root["runs"] = json::array();
    for (const auto& run : result.runs) {
        json jrun;
        jrun["arm"] = fed::arm_name(run.arm);
        jrun["seed"] = run.seed;
        jrun["final_id_acc"] = run.final_id_accuracy;
        jrun["final_ood_acc"] = run.final_ood_accuracy;
        jrun["history"] = json::array();
        for (const auto& r : run.history) {
            jrun["history"].push_back({{"round", r.round_index},
                                       {"train_loss", r.mean_train_loss},
                                       {"ce", r.mean_ce},
                                       {"ca", r.mean_ca},
                                       {"align", r.mean_align},
                                       {"id_acc", r.id_accuracy},
                                       {"ood_acc", r.ood_accuracy},
                                       {"bg_conf", r.background_confidence},
                                       {"secs", r.seconds}});
        }
        jrun["probe"] = {{"mean_confidence", run.probe.mean_confidence},
                         {"confound_confidence", run.probe.confound_confidence},
                         {"confound_match_rate", run.probe.confound_match_rate}};
        jrun["confusion"] = run.confusion;
        root["runs"].push_back(std::move(jrun));
    }
    return root.dump(2) + "\n";
}

std::string summary_table(const ExperimentResult& result) {
    std::string out;
    out += "arm               ood_acc          id_acc           bg_conf  confound  match\n";
    for (const auto& [arm, st] : collect_stats(result)) {
        char line[160];
        std::snprintf(line, sizeof(line),
                      "%-17s %.4f +- %.4f  %.4f +- %.4f  %.4f   %.4f    %.4f\n",
                      fed::arm_name(arm).c_str(), mean_of(st.ood), std_of(st.ood), mean_of(st.id),
                      std_of(st.id), mean_of(st.conf), mean_of(st.cconf), mean_of(st.match));
        out += line;
    }
    return out;
}

ExperimentResult run_and_emit(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    ExperimentResult result;
    std::set<std::uint64_t> manifests_written;
    for (std::uint64_t seed : cfg.seeds) {
        SeedRuns ctx;
        ctx.prep = prepare_data(cfg, seed);
        ctx.eval_sets.id_set = ctx.prep.id_set;
        ctx.eval_sets.ood_set = ctx.prep.ood_set;
        ctx.eval_sets.probe = eval::prepare_probe_inputs(ctx.prep.id_set, cfg.federated.crl,
                                                         ctx.prep.num_backgrounds);
        if (!manifests_written.count(seed)) {
            data::write_manifest(
                (fs::path(cfg.output_dir) / ("manifest_seed" + std::to_string(seed) + ".jsonl"))
                    .string(),
                ctx.prep.manifest);
            manifests_written.insert(seed);
        }
        for (fed::Arm arm : cfg.arms) {
            RunResult run = run_one(cfg, ctx, arm, seed);
            nn::save_params(run.final_params,
                            (fs::path(cfg.output_dir) /
                             ("checkpoint_" + fed::arm_name(arm) + "_seed" + std::to_string(seed) +
                              ".fcaw"))
                                .string());
            result.runs.push_back(std::move(run));
        }
    }

    auto write_text = [](const std::string& path, const std::string& text) {
        std::ofstream f(path, std::ios::trunc | std::ios::binary);
        if (!f) throw ArgumentError("cannot write report: " + path);
        f << text;
    };
    write_text((fs::path(cfg.output_dir) / "rounds.csv").string(), rounds_csv(result));
    write_text((fs::path(cfg.output_dir) / "summary.csv").string(), summary_csv(result));
    write_text((fs::path(cfg.output_dir) / "report.json").string(), report_json(cfg, result));

    std::cout << summary_table(result);
    return result;
}

int run_experiment(const std::string& config_path, const RunOverrides& overrides) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        if (overrides.arm) {
            const auto arm = fed::parse_arm(*overrides.arm);
            if (!arm) throw ConfigError("--arm", "unknown arm '" + *overrides.arm + "'");
            cfg.arms = {*arm};
        }
        if (overrides.seed) cfg.seeds = {*overrides.seed};
        if (overrides.out_dir) cfg.output_dir = *overrides.out_dir;
        run_and_emit(cfg);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int export_augmented_corpus(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const std::uint64_t seed = cfg.seeds.front();
    std::vector<data::LabeledImage> samples;
    if (cfg.dataset.source == "synthetic") {
        samples = data::synth_colored_digits(cfg.dataset.spurious, cfg.dataset.train_per_class,
                                             fed::derive_seed(seed, kTrainTag));
    } else {
        samples = data::load_idx(cfg.dataset.idx_images, cfg.dataset.idx_labels);
    }

    // One shard holding the whole set: the corpus export composites within it.
    data::ClientShard shard;
    shard.client_id = 0;
    shard.samples = std::move(samples);
    std::vector<crl::CausalSource> sources;
    shard = data::build_background_pool(std::move(shard), cfg.federated.crl, &sources);

    std::mt19937_64 rng(fed::derive_seed(seed, kExportTag));
    std::uniform_int_distribution<std::size_t> pool_pick(0, shard.background_pool.size() - 1);

    std::ofstream bboxes((fs::path(out_dir) / "bboxes.txt").string(), std::ios::trunc);
    if (!bboxes) throw ArgumentError("cannot write bbox manifest in " + out_dir);

    int files = 0;
    for (std::size_t i = 0; i < shard.samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "%05zu", i);
        const crl::CausalSource& src = sources[i];

        img::save_pnm(src.sharpened, (fs::path(out_dir) / (std::string(stem) + "_sharpened.ppm"))
                                         .string());
        img::save_mask_pgm(src.region.mask,
                           (fs::path(out_dir) / (std::string(stem) + "_mask.pgm")).string());

        const img::Image object = crl::extract_object(src.sharpened, src.region);
        const img::Image comp = img::composite(object, src.region.mask,
                                               shard.background_pool[pool_pick(rng)],
                                               cfg.federated.alpha);
        img::save_pnm(comp, (fs::path(out_dir) / (std::string(stem) + "_composite.ppm")).string());

        bboxes << i << " " << src.region.bbox.x1 << " " << src.region.bbox.y1 << " "
               << src.region.bbox.x2 << " " << src.region.bbox.y2 << "\n";
        files += 3;
    }
    return files;
}

int export_augmented_corpus_cli(const std::string& config_path, const std::string& out_dir) {
    try {
        const ExperimentConfig cfg = load_config(config_path);
        const int files = export_augmented_corpus(cfg, out_dir);
        std::cout << "wrote " << files << " files to " << out_dir << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedcaug::cli
