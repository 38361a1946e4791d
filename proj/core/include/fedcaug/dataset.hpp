#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedcaug/crl.hpp"
#include "fedcaug/image.hpp"
#include "fedcaug/tensor.hpp"

namespace fedcaug::data {

struct LabeledImage {
    img::Image image;
    int label = 0;
    int background_id = -1;  // -1 when the source has no background notion (IDX)
};

// One client's private slice: labeled samples plus a background pool built
// exclusively from those samples.
struct ClientShard {
    int client_id = -1;
    std::vector<LabeledImage> samples;
    std::vector<img::Image> background_pool;
};

enum class OodPolicy { Uniform, AntiCorrelated };

// Controls the synthetic background<->label confound.
struct SpuriousSpec {
    int num_classes = 10;
    int num_backgrounds = 10;
    // Probability that a training sample gets its class-assigned background;
    // otherwise the background is uniform over the palette.
    double train_correlation = 1.0;
    OodPolicy ood_policy = OodPolicy::Uniform;
};

// The class->background assignment used by the confound: label mod B.
int assigned_background(int label, int num_backgrounds);

// Fixed palette color for a background id, as RGB in [0,1]. Colors keep
// luminance well below the glyph's so contrast-based saliency works.
std::array<double, 3> palette_color(int background_id, int num_backgrounds);

// IDX binary ingestion (images magic 0x00000803, labels 0x00000801,
// big-endian u32 header fields, u8 pixels scaled to [0,1]).
std::vector<LabeledImage> load_idx(const std::string& images_path, const std::string& labels_path);

// 28x28 seven-segment style digits with per-sample jitter (+-2 px translation,
// glyph luminance noise sigma 0.05) on solid palette backgrounds drawn per the
// spec's correlation. Deterministic for a given seed.
std::vector<LabeledImage> synth_colored_digits(const SpuriousSpec& spec, int n_per_class,
                                               std::uint64_t seed);

// Same glyph generator; backgrounds drawn by the OOD policy instead of the
// training correlation.
std::vector<LabeledImage> make_ood_test_split(const SpuriousSpec& spec, int n_per_class,
                                              std::uint64_t seed);

// Per class, draw proportions ~ Dirichlet(beta) and split that class's samples
// by largest-remainder rounding. Redraws (up to 100 times) if a client would
// end up empty.
std::vector<ClientShard> dirichlet_partition(const std::vector<LabeledImage>& samples,
                                             int num_clients, double beta, std::uint64_t seed);

// Fills shard.background_pool: per sample, background = sharpened image minus
// the causal region, with the hole filled by the mean color of the background
// pixels. Optionally hands back the per-sample sharpened/region pairs so
// training can reuse them.
ClientShard build_background_pool(ClientShard shard, const crl::CrlConfig& cfg,
                                  std::vector<crl::CausalSource>* sources_out = nullptr);

struct ManifestEntry {
    int index = 0;
    int label = 0;
    int background_id = -1;
    std::string split;
    int client_id = -1;
};

// JSON-lines manifest: {"index":..,"label":..,"background_id":..,"split":..,"client_id":..}
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Packs images into an [N x C x H x W] tensor (planar per image).
nn::Tensor to_batch(const std::vector<const img::Image*>& images);
nn::Tensor to_batch(const std::vector<LabeledImage>& samples);

}  // namespace fedcaug::data
