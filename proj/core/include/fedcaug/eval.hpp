#pragma once

#include <vector>

#include "fedcaug/crl.hpp"
#include "fedcaug/dataset.hpp"
#include "fedcaug/model.hpp"

namespace fedcaug::eval {

// Fraction of argmax(logits) == label; argmax ties resolve to the lowest
// class index.
double top1_accuracy(const nn::ModelParams& params, const std::vector<data::LabeledImage>& samples);

// rows = true class, cols = predicted class; entries sum to |samples|.
std::vector<std::vector<long long>> confusion_matrix(
    const nn::ModelParams& params, const std::vector<data::LabeledImage>& samples);

struct ProbeResult {
    std::vector<double> confidences;  // per-sample max softmax
    double mean_confidence = 0.0;     // mean of the above
    // Fraction of probes predicted as a class whose assigned background is the
    // probe's background.
    double confound_match_rate = 0.0;
    // Mean softmax mass the model puts on the background's paired class: the
    // strength of the background->label association itself.
    double confound_confidence = 0.0;
};

// Background-only probe inputs: the localized object replaced by the mean
// color of the rest of the frame. Parameter-independent, so callers can
// prepare once and probe every round.
struct ProbeInputs {
    std::vector<img::Image> images;
    std::vector<int> background_ids;
    int num_backgrounds = 0;
};

ProbeInputs prepare_probe_inputs(const std::vector<data::LabeledImage>& samples,
                                 const crl::CrlConfig& cfg, int num_backgrounds);
ProbeResult probe_prepared(const nn::ModelParams& params, const ProbeInputs& inputs);

// prepare + probe in one call.
ProbeResult background_probe(const nn::ModelParams& params,
                             const std::vector<data::LabeledImage>& samples,
                             const crl::CrlConfig& cfg, int num_backgrounds);

}  // namespace fedcaug::eval
