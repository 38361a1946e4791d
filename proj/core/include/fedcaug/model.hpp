#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedcaug/tensor.hpp"

namespace fedcaug::nn {

// Fixed SimpleCNN topology: conv (same padding) -> ReLU -> 2x2 max pool ->
// dense(hidden_dim) -> ReLU (the feature extractor) -> dense(num_classes)
// (the classifier head).
struct Architecture {
    int in_channels = 3;
    int in_height = 28;
    int in_width = 28;
    int conv_channels = 16;
    int kernel = 3;  // odd
    int hidden_dim = 64;
    int num_classes = 10;

    bool operator==(const Architecture&) const = default;

    int pooled_height() const noexcept { return in_height / 2; }
    int pooled_width() const noexcept { return in_width / 2; }
    int flat_dim() const noexcept { return conv_channels * pooled_height() * pooled_width(); }
};

// Named parameter tensors: conv.weight, conv.bias, fc1.weight, fc1.bias,
// fc2.weight, fc2.bias. Equal architectures imply equal key sets and shapes.
struct ModelParams {
    Architecture arch;
    std::map<std::string, Tensor> tensors;
};

// Scalar loss plus gradients keyed like the structure they differentiate:
// parameter names for backward()/backward_ce(), "logits" for cross_entropy().
// ce/ca/align break the scalar into its objective components.
struct LossValue {
    double scalar = 0.0;
    std::map<std::string, Tensor> gradients;
    double ce = 0.0;
    double ca = 0.0;
    double align = 0.0;
};

// Kaiming-uniform weights (fan-in scaling for ReLU), zero biases. Deterministic
// for a given seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Penultimate-layer features [N x hidden_dim] for a batch [N x C x H x W].
Tensor forward_features(const ModelParams& params, const Tensor& batch);

// Classifier head: unnormalized scores [N x num_classes]; no softmax applied.
Tensor forward_logits(const ModelParams& params, const Tensor& features);

// Mean softmax cross-entropy, max-stabilized. Gradients w.r.t. the logits under
// key "logits".
LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Plain classification objective: CE(batch) with full parameter gradients.
LossValue backward_ce(const ModelParams& params, const Tensor& batch,
                      const std::vector<int>& labels);

// Full objective: CE(batch) + CE(aug_batch) + align_weight * mean squared
// distance between the two feature matrices. Gradients accumulate through both
// branches into the shared parameters.
LossValue backward(const ModelParams& params, const Tensor& batch, const std::vector<int>& labels,
                   const Tensor& aug_batch, const std::vector<int>& aug_labels,
                   double align_weight);

// p <- p - lr * (g + weight_decay * p) for every tensor.
ModelParams sgd_step(ModelParams params, const std::map<std::string, Tensor>& grads, double lr,
                     double weight_decay);

}  // namespace fedcaug::nn
