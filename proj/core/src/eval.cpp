#include "fedcaug/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fedcaug/error.hpp"

namespace fedcaug::eval {

namespace {

// Batched forward to bound peak memory on large eval sets.
constexpr int kEvalBatch = 256;

std::vector<int> predictions(const nn::ModelParams& params,
                             const std::vector<const img::Image*>& images) {
    std::vector<int> preds;
    preds.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += kEvalBatch) {
        const std::size_t end = std::min(images.size(), start + kEvalBatch);
        std::vector<const img::Image*> chunk(images.begin() + start, images.begin() + end);
        const nn::Tensor logits =
            nn::forward_logits(params, nn::forward_features(params, data::to_batch(chunk)));
        const int classes = logits.shape[1];
        for (int s = 0; s < logits.shape[0]; ++s) {
            int best = 0;
            for (int c = 1; c < classes; ++c) {
                if (logits.at2(s, c) > logits.at2(s, best)) best = c;
            }
            preds.push_back(best);
        }
    }
    return preds;
}

}  // namespace

double top1_accuracy(const nn::ModelParams& params,
                     const std::vector<data::LabeledImage>& samples) {
    if (samples.empty()) throw ArgumentError("top1_accuracy: empty sample set");
    std::vector<const img::Image*> images;
    images.reserve(samples.size());
    for (const auto& s : samples) images.push_back(&s.image);
    const std::vector<int> preds = predictions(params, images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) hits += preds[i] == samples[i].label;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<std::vector<long long>> confusion_matrix(
    const nn::ModelParams& params, const std::vector<data::LabeledImage>& samples) {
    if (samples.empty()) throw ArgumentError("confusion_matrix: empty sample set");
    const int classes = params.arch.num_classes;
    std::vector<std::vector<long long>> m(classes, std::vector<long long>(classes, 0));
    std::vector<const img::Image*> images;
    images.reserve(samples.size());
    for (const auto& s : samples) images.push_back(&s.image);
    const std::vector<int> preds = predictions(params, images);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label < 0 || samples[i].label >= classes) {
            throw ArgumentError("confusion_matrix: label " + std::to_string(samples[i].label) +
                                " out of range");
        }
        m[samples[i].label][preds[i]] += 1;
    }
    return m;
}

ProbeInputs prepare_probe_inputs(const std::vector<data::LabeledImage>& samples,
                                 const crl::CrlConfig& cfg, int num_backgrounds) {
    if (samples.empty()) throw ArgumentError("background probe: empty sample set");
    ProbeInputs inputs;
    inputs.num_backgrounds = num_backgrounds;
    inputs.images.reserve(samples.size());
    inputs.background_ids.reserve(samples.size());

    for (const auto& sample : samples) {
        const crl::CausalSource src = crl::sharpen_and_localize(sample.image, cfg);
        const img::Image& orig = sample.image;
        const img::BinaryMap& mask = src.region.mask;

        // Mean color of the non-object pixels (whole frame if the mask covers
        // everything), painted over the object.
        std::array<double, 3> mean{0.0, 0.0, 0.0};
        std::size_t n_bg = 0;
        for (int y = 0; y < orig.height; ++y) {
            for (int x = 0; x < orig.width; ++x) {
                if (mask.at(y, x)) continue;
                for (int c = 0; c < orig.channels; ++c) mean[c] += orig.at(y, x, c);
                ++n_bg;
            }
        }
        if (n_bg == 0) {
            for (int y = 0; y < orig.height; ++y)
                for (int x = 0; x < orig.width; ++x)
                    for (int c = 0; c < orig.channels; ++c) mean[c] += orig.at(y, x, c);
            n_bg = orig.pixel_count();
        }
        for (int c = 0; c < orig.channels; ++c) mean[c] /= static_cast<double>(n_bg);

        img::Image probe = orig;
        for (int y = 0; y < orig.height; ++y) {
            for (int x = 0; x < orig.width; ++x) {
                if (!mask.at(y, x)) continue;
                for (int c = 0; c < orig.channels; ++c) probe.at(y, x, c) = mean[c];
            }
        }
        inputs.images.push_back(std::move(probe));
        inputs.background_ids.push_back(sample.background_id);
    }
    return inputs;
}

ProbeResult probe_prepared(const nn::ModelParams& params, const ProbeInputs& inputs) {
    if (inputs.images.empty()) throw ArgumentError("background probe: no prepared inputs");
    ProbeResult result;
    result.confidences.reserve(inputs.images.size());

    std::size_t matches = 0;
    double conf_sum = 0.0;
    double confound_sum = 0.0;
    for (std::size_t start = 0; start < inputs.images.size(); start += kEvalBatch) {
        const std::size_t end = std::min(inputs.images.size(), start + kEvalBatch);
        std::vector<const img::Image*> chunk;
        chunk.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) chunk.push_back(&inputs.images[i]);
        const nn::Tensor logits =
            nn::forward_logits(params, nn::forward_features(params, data::to_batch(chunk)));
        const int classes = logits.shape[1];
        for (int s = 0; s < logits.shape[0]; ++s) {
            const double* z = logits.data.data() + static_cast<std::size_t>(s) * classes;
            double m = z[0];
            int best = 0;
            for (int c = 1; c < classes; ++c) {
                if (z[c] > m) {
                    m = z[c];
                    best = c;
                }
            }
            double sum = 0.0;
            for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
            const double conf = 1.0 / sum;  // max softmax
            result.confidences.push_back(conf);
            conf_sum += conf;
            const int bg = inputs.background_ids[start + s];
            if (bg >= 0 && inputs.num_backgrounds > 0) {
                if (data::assigned_background(best, inputs.num_backgrounds) == bg) ++matches;
                // Total softmax mass on classes paired with this background.
                for (int c = 0; c < classes; ++c) {
                    if (data::assigned_background(c, inputs.num_backgrounds) == bg) {
                        confound_sum += std::exp(z[c] - m) / sum;
                    }
                }
            }
        }
    }
    result.mean_confidence = conf_sum / static_cast<double>(result.confidences.size());
    result.confound_match_rate =
        static_cast<double>(matches) / static_cast<double>(result.confidences.size());
    result.confound_confidence = confound_sum / static_cast<double>(result.confidences.size());
    return result;
}

ProbeResult background_probe(const nn::ModelParams& params,
                             const std::vector<data::LabeledImage>& samples,
                             const crl::CrlConfig& cfg, int num_backgrounds) {
    return probe_prepared(params, prepare_probe_inputs(samples, cfg, num_backgrounds));
}

}  // namespace fedcaug::eval
