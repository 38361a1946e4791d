#include "fedcaug/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedcaug/error.hpp"

namespace fedcaug::data {

namespace {

constexpr int kDigitSide = 28;

// Seven-segment layout. Segment order: A top, B top-right, C bottom-right,
// D bottom, E bottom-left, F top-left, G middle.
struct Segment {
    int y1, y2, x1, x2;  // inclusive
};

constexpr Segment kSegments[7] = {
    {5, 6, 10, 17},    // A
    {6, 13, 17, 18},   // B
    {14, 21, 17, 18},  // C
    {21, 22, 10, 17},  // D
    {14, 21, 9, 10},   // E
    {6, 13, 9, 10},    // F
    {13, 14, 10, 17},  // G
};

constexpr std::uint8_t kDigitSegments[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8
    0b1101111,  // 9: ABCDFG
};

// Glyph support at a given translation.
void glyph_pixels(int digit, int dx, int dy, std::vector<std::pair<int, int>>& out) {
    out.clear();
    const std::uint8_t segs = kDigitSegments[digit];
    for (int s = 0; s < 7; ++s) {
        if (!(segs >> s & 1)) continue;
        const Segment& seg = kSegments[s];
        for (int y = seg.y1; y <= seg.y2; ++y) {
            for (int x = seg.x1; x <= seg.x2; ++x) {
                out.emplace_back(y + dy, x + dx);
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
}

void validate_spec(const SpuriousSpec& spec) {
    if (spec.num_classes < 1 || spec.num_classes > 10) {
        throw ArgumentError("synthetic digits support 1..10 classes, got " +
                            std::to_string(spec.num_classes));
    }
    if (spec.num_backgrounds < 2) {
        throw ArgumentError("need at least 2 backgrounds, got " +
                            std::to_string(spec.num_backgrounds));
    }
    if (spec.train_correlation < 0.0 || spec.train_correlation > 1.0) {
        throw ArgumentError("train_correlation must lie in [0,1]");
    }
}

img::Image render_digit(int digit, int background_id, int num_backgrounds, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> jitter(-2, 2);
    const int dx = jitter(rng);
    const int dy = jitter(rng);

    const std::array<double, 3> bg = palette_color(background_id, num_backgrounds);
    img::Image image(kDigitSide, kDigitSide, 3);
    for (int y = 0; y < kDigitSide; ++y)
        for (int x = 0; x < kDigitSide; ++x)
            for (int c = 0; c < 3; ++c) image.at(y, x, c) = bg[c];

    std::vector<std::pair<int, int>> pixels;
    glyph_pixels(digit, dx, dy, pixels);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (const auto& [y, x] : pixels) {
        const double v = img::clamp01(0.95 + noise(rng));
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = v;
    }
    return image;
}

std::vector<LabeledImage> generate(const SpuriousSpec& spec, int n_per_class, std::uint64_t seed,
                                   bool ood_split) {
    validate_spec(spec);
    if (n_per_class < 1) throw ArgumentError("n_per_class must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> any_bg(0, spec.num_backgrounds - 1);
    std::uniform_int_distribution<int> other_bg(0, spec.num_backgrounds - 2);

    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(spec.num_classes) * n_per_class);
    int index = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        const int assigned = assigned_background(c, spec.num_backgrounds);
        for (int i = 0; i < n_per_class; ++i) {
            int bg;
            if (!ood_split) {
                bg = coin(rng) < spec.train_correlation ? assigned : any_bg(rng);
            } else if (spec.ood_policy == OodPolicy::Uniform) {
                bg = any_bg(rng);
            } else {
                const int draw = other_bg(rng);
                bg = draw >= assigned ? draw + 1 : draw;
            }
            LabeledImage sample;
            sample.image = render_digit(c, bg, spec.num_backgrounds, rng);
            sample.image.provenance = index;
            sample.label = c;
            sample.background_id = bg;
            out.push_back(std::move(sample));
            ++index;
        }
    }
    return out;
}

std::uint32_t read_be_u32(const std::string& bytes, std::size_t pos, const std::string& path) {
    if (pos + 4 > bytes.size()) {
        throw FormatError(path + ": truncated header", bytes.size());
    }
    return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos])) << 24) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + 3]));
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

int assigned_background(int label, int num_backgrounds) { return label % num_backgrounds; }

std::array<double, 3> palette_color(int background_id, int num_backgrounds) {
    if (background_id < 0 || background_id >= num_backgrounds) {
        throw ArgumentError("background_id " + std::to_string(background_id) + " out of range");
    }
    // Evenly spaced hues at fixed saturation/value; luminance stays in roughly
    // [0.2, 0.5], far from the ~0.95 glyph.
    const double h = 360.0 * background_id / num_backgrounds;
    const double s = 0.65, v = 0.55;
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

std::vector<LabeledImage> load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string ibytes = read_file(images_path);
    const std::string lbytes = read_file(labels_path);

    if (read_be_u32(ibytes, 0, images_path) != 0x00000803u) {
        throw FormatError(images_path + ": bad magic (expected 0x00000803 image file)", 0);
    }
    if (read_be_u32(lbytes, 0, labels_path) != 0x00000801u) {
        throw FormatError(labels_path + ": bad magic (expected 0x00000801 label file)", 0);
    }
    const std::uint32_t n_images = read_be_u32(ibytes, 4, images_path);
    const std::uint32_t rows = read_be_u32(ibytes, 8, images_path);
    const std::uint32_t cols = read_be_u32(ibytes, 12, images_path);
    const std::uint32_t n_labels = read_be_u32(lbytes, 4, labels_path);

    if (n_images != n_labels) {
        throw FormatError(labels_path + ": label count " + std::to_string(n_labels) +
                              " does not match image count " + std::to_string(n_images),
                          4);
    }
    const std::size_t pixel_bytes = static_cast<std::size_t>(n_images) * rows * cols;
    if (ibytes.size() < 16 + pixel_bytes) {
        throw FormatError(images_path + ": truncated payload", ibytes.size());
    }
    if (lbytes.size() < 8 + n_labels) {
        throw FormatError(labels_path + ": truncated payload", lbytes.size());
    }

    std::vector<LabeledImage> out;
    out.reserve(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        LabeledImage sample;
        sample.image = img::Image(static_cast<int>(rows), static_cast<int>(cols), 1);
        const std::size_t base = 16 + static_cast<std::size_t>(i) * rows * cols;
        for (std::size_t p = 0; p < static_cast<std::size_t>(rows) * cols; ++p) {
            sample.image.pixels[p] = static_cast<std::uint8_t>(ibytes[base + p]) / 255.0;
        }
        sample.image.provenance = static_cast<int>(i);
        sample.label = static_cast<std::uint8_t>(lbytes[8 + i]);
        sample.background_id = -1;
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<LabeledImage> synth_colored_digits(const SpuriousSpec& spec, int n_per_class,
                                               std::uint64_t seed) {
    return generate(spec, n_per_class, seed, false);
}

std::vector<LabeledImage> make_ood_test_split(const SpuriousSpec& spec, int n_per_class,
                                              std::uint64_t seed) {
    return generate(spec, n_per_class, seed, true);
}

std::vector<ClientShard> dirichlet_partition(const std::vector<LabeledImage>& samples,
                                             int num_clients, double beta, std::uint64_t seed) {
    if (num_clients < 2) throw ArgumentError("dirichlet_partition: need at least 2 clients");
    if (beta <= 0.0) throw ArgumentError("dirichlet_partition: beta must be positive");

    // Group sample indices per class, in input order.
    std::vector<int> labels_present;
    std::vector<std::vector<std::size_t>> by_class;
    {
        int max_label = 0;
        for (const auto& s : samples) max_label = std::max(max_label, s.label);
        by_class.assign(static_cast<std::size_t>(max_label) + 1, {});
        for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
        for (int c = 0; c <= max_label; ++c) {
            if (by_class[c].empty()) continue;
            labels_present.push_back(c);
            if (static_cast<int>(by_class[c].size()) < num_clients) {
                throw ArgumentError("dirichlet_partition: class " + std::to_string(c) + " has " +
                                    std::to_string(by_class[c].size()) + " samples for " +
                                    std::to_string(num_clients) + " clients");
            }
        }
    }

    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(beta, 1.0);

    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<ClientShard> shards(num_clients);
        for (int k = 0; k < num_clients; ++k) shards[k].client_id = k;

        for (int c : labels_present) {
            std::vector<std::size_t> indices = by_class[c];
            std::shuffle(indices.begin(), indices.end(), rng);

            std::vector<double> p(num_clients);
            double sum = 0.0;
            for (int k = 0; k < num_clients; ++k) {
                p[k] = gamma(rng);
                sum += p[k];
            }
            if (sum <= 0.0) {
                std::fill(p.begin(), p.end(), 1.0);
                sum = num_clients;
            }
            for (double& v : p) v /= sum;

            // Largest-remainder rounding of p * n into integer counts.
            const int n = static_cast<int>(indices.size());
            std::vector<int> counts(num_clients);
            std::vector<std::pair<double, int>> remainders(num_clients);
            int assigned = 0;
            for (int k = 0; k < num_clients; ++k) {
                const double exact = p[k] * n;
                counts[k] = static_cast<int>(std::floor(exact));
                remainders[k] = {exact - counts[k], k};
                assigned += counts[k];
            }
            std::stable_sort(remainders.begin(), remainders.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (int r = 0; r < n - assigned; ++r) counts[remainders[r].second] += 1;

            std::size_t cursor = 0;
            for (int k = 0; k < num_clients; ++k) {
                for (int j = 0; j < counts[k]; ++j) {
                    shards[k].samples.push_back(samples[indices[cursor++]]);
                }
            }
        }

        const bool all_nonempty = std::all_of(shards.begin(), shards.end(),
                                              [](const ClientShard& s) { return !s.samples.empty(); });
        if (all_nonempty) return shards;
    }
    throw ArgumentError("dirichlet_partition: a client stayed empty after 100 retries");
}

ClientShard build_background_pool(ClientShard shard, const crl::CrlConfig& cfg,
                                  std::vector<crl::CausalSource>* sources_out) {
    if (shard.samples.empty()) {
        throw ArgumentError("build_background_pool: shard " + std::to_string(shard.client_id) +
                            " is empty");
    }
    shard.background_pool.clear();
    shard.background_pool.reserve(shard.samples.size());
    if (sources_out) {
        sources_out->clear();
        sources_out->reserve(shard.samples.size());
    }

    for (const LabeledImage& sample : shard.samples) {
        crl::CausalSource src = crl::sharpen_and_localize(sample.image, cfg);
        img::Image background = src.sharpened;  // keeps the sample's provenance

        // Mean color over the non-object pixels; whole image if the mask
        // covers the full frame.
        const img::Image& sharp = src.sharpened;
        const img::BinaryMap& mask = src.region.mask;
        std::array<double, 3> mean{0.0, 0.0, 0.0};
        std::size_t n_bg = 0;
        for (int y = 0; y < sharp.height; ++y) {
            for (int x = 0; x < sharp.width; ++x) {
                if (mask.at(y, x)) continue;
                for (int c = 0; c < sharp.channels; ++c) mean[c] += sharp.at(y, x, c);
                ++n_bg;
            }
        }
        if (n_bg == 0) {
            for (int y = 0; y < sharp.height; ++y)
                for (int x = 0; x < sharp.width; ++x)
                    for (int c = 0; c < sharp.channels; ++c) mean[c] += sharp.at(y, x, c);
            n_bg = sharp.pixel_count();
        }
        for (int c = 0; c < sharp.channels; ++c) mean[c] /= static_cast<double>(n_bg);

        for (int y = 0; y < sharp.height; ++y) {
            for (int x = 0; x < sharp.width; ++x) {
                if (!mask.at(y, x)) continue;
                for (int c = 0; c < sharp.channels; ++c) background.at(y, x, c) = mean[c];
            }
        }
        shard.background_pool.push_back(std::move(background));
        if (sources_out) sources_out->push_back(std::move(src));
    }
    return shard;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ArgumentError("cannot write manifest: " + path);
    for (const ManifestEntry& e : entries) {
        nlohmann::json line = {{"index", e.index},
                               {"label", e.label},
                               {"background_id", e.background_id},
                               {"split", e.split},
                               {"client_id", e.client_id}};
        f << line.dump() << "\n";
    }
}

nn::Tensor to_batch(const std::vector<const img::Image*>& images) {
    if (images.empty()) throw ArgumentError("to_batch: empty image list");
    const img::Image& first = *images.front();
    const int n = static_cast<int>(images.size());
    nn::Tensor batch({n, first.channels, first.height, first.width});
    const std::size_t plane = first.pixel_count();
    for (int s = 0; s < n; ++s) {
        const img::Image& im = *images[s];
        if (im.height != first.height || im.width != first.width || im.channels != first.channels) {
            throw ShapeError("to_batch",
                             std::to_string(first.height) + "x" + std::to_string(first.width) + "x" +
                                 std::to_string(first.channels),
                             std::to_string(im.height) + "x" + std::to_string(im.width) + "x" +
                                 std::to_string(im.channels));
        }
        double* dst = batch.data.data() + static_cast<std::size_t>(s) * first.channels * plane;
        for (int c = 0; c < im.channels; ++c) {
            for (int y = 0; y < im.height; ++y) {
                for (int x = 0; x < im.width; ++x) {
                    dst[c * plane + static_cast<std::size_t>(y) * im.width + x] = im.at(y, x, c);
                }
            }
        }
    }
    return batch;
}

nn::Tensor to_batch(const std::vector<LabeledImage>& samples) {
    std::vector<const img::Image*> ptrs;
    ptrs.reserve(samples.size());
    for (const auto& s : samples) ptrs.push_back(&s.image);
    return to_batch(ptrs);
}

}  // namespace fedcaug::data
