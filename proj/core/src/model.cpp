#include "fedcaug/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedcaug/error.hpp"

namespace fedcaug::nn {

namespace {

std::map<std::string, std::vector<int>> expected_shapes(const Architecture& a) {
    return {
        {"conv.weight", {a.conv_channels, a.in_channels, a.kernel, a.kernel}},
        {"conv.bias", {a.conv_channels}},
        {"fc1.weight", {a.hidden_dim, a.flat_dim()}},
        {"fc1.bias", {a.hidden_dim}},
        {"fc2.weight", {a.num_classes, a.hidden_dim}},
        {"fc2.bias", {a.num_classes}},
    };
}

const Tensor& param(const ModelParams& p, const std::string& name) {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end()) {
        throw ArgumentError("missing parameter tensor '" + name + "'");
    }
    return it->second;
}

int batch_rows(const Tensor& batch, const Architecture& a, const char* context) {
    if (batch.shape.size() != 4 || batch.shape[1] != a.in_channels ||
        batch.shape[2] != a.in_height || batch.shape[3] != a.in_width || batch.shape[0] < 1) {
        throw ShapeError(context,
                         "[Nx" + std::to_string(a.in_channels) + "x" + std::to_string(a.in_height) +
                             "x" + std::to_string(a.in_width) + "]",
                         shape_string(batch.shape));
    }
    return batch.shape[0];
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
    int n = 0;
    Tensor conv_pre;            // [N, Cout, H, W] pre-ReLU
    Tensor pooled;              // [N, Cout, H/2, W/2]; doubles as the flat input to fc1
    std::vector<int> argmax;    // plane index of the pool winner per pooled element
    Tensor fc1_pre;             // [N, hidden]
    Tensor features;            // [N, hidden]
    Tensor logits;              // [N, classes]
    std::vector<double> padded; // zero-padded input planes, reused by the weight grads
    int padded_hw = 0;
};

void conv_pad_sample(const Tensor& batch, int n, const Architecture& a, int pad, double* padded) {
    const int hp = a.in_height + 2 * pad, wp = a.in_width + 2 * pad;
    const std::size_t plane = static_cast<std::size_t>(a.in_height) * a.in_width;
    const std::size_t pplane = static_cast<std::size_t>(hp) * wp;
    std::fill(padded, padded + static_cast<std::size_t>(a.in_channels) * pplane, 0.0);
    for (int c = 0; c < a.in_channels; ++c) {
        const double* src = batch.data.data() +
                            (static_cast<std::size_t>(n) * a.in_channels + c) * plane;
        double* dst = padded + c * pplane;
        for (int i = 0; i < a.in_height; ++i) {
            std::copy(src + static_cast<std::size_t>(i) * a.in_width,
                      src + static_cast<std::size_t>(i + 1) * a.in_width,
                      dst + static_cast<std::size_t>(i + pad) * wp + pad);
        }
    }
}

ForwardCache forward_pass(const ModelParams& params, const Tensor& batch, const char* context) {
    const Architecture& a = params.arch;
    const int n = batch_rows(batch, a, context);
    const int h = a.in_height, w = a.in_width, k = a.kernel, pad = a.kernel / 2;
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    const int h2 = a.pooled_height(), w2 = a.pooled_width();
    const int cin = a.in_channels, cout = a.conv_channels;
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    const Tensor& cw = param(params, "conv.weight");
    const Tensor& cb = param(params, "conv.bias");
    const Tensor& fc1_w = param(params, "fc1.weight");
    const Tensor& fc1_b = param(params, "fc1.bias");
    const Tensor& fc2_w = param(params, "fc2.weight");
    const Tensor& fc2_b = param(params, "fc2.bias");

    ForwardCache f;
    f.n = n;
    f.conv_pre = Tensor({n, cout, h, w});
    f.pooled = Tensor({n, cout, h2, w2});
    f.argmax.resize(static_cast<std::size_t>(n) * cout * h2 * w2);
    f.padded.resize(static_cast<std::size_t>(n) * cin * hp * wp);
    f.padded_hw = hp * wp;

    // Convolution with 'same' zero padding, then ReLU + 2x2 max pool.
    const std::size_t pstride = static_cast<std::size_t>(cin) * hp * wp;
    for (int s = 0; s < n; ++s) {
        conv_pad_sample(batch, s, a, pad, f.padded.data() + s * pstride);
        const double* padded = f.padded.data() + s * pstride;

        for (int o = 0; o < cout; ++o) {
            double* out = f.conv_pre.data.data() + (static_cast<std::size_t>(s) * cout + o) * hw;
            std::fill(out, out + hw, cb[o]);
            for (int c = 0; c < cin; ++c) {
                const double* wrow0 = cw.data.data() +
                                      ((static_cast<std::size_t>(o) * cin + c) * k) * k;
                const double* xc = padded + static_cast<std::size_t>(c) * hp * wp;
                for (int u = 0; u < k; ++u) {
                    // One pass per (c,u): all k horizontal taps fused into the
                    // row traversal.
                    const double* wk = wrow0 + static_cast<std::size_t>(u) * k;
                    for (int i = 0; i < h; ++i) {
                        const double* srow = xc + static_cast<std::size_t>(i + u) * wp;
                        double* drow = out + static_cast<std::size_t>(i) * w;
                        for (int v = 0; v < k; ++v) {
                            const double wgt = wk[v];
                            const double* sv = srow + v;
                            for (int j = 0; j < w; ++j) drow[j] += wgt * sv[j];
                        }
                    }
                }
            }

            // ReLU folded into the pooling max: relu is monotone, so the pool
            // argmax over relu'd values is the scan-order-first max position.
            const std::size_t pool_base = (static_cast<std::size_t>(s) * cout + o) *
                                          (static_cast<std::size_t>(h2) * w2);
            for (int p = 0; p < h2; ++p) {
                for (int q = 0; q < w2; ++q) {
                    int best_idx = (2 * p) * w + 2 * q;
                    double best = std::max(0.0, out[best_idx]);
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const int idx = (2 * p + dy) * w + (2 * q + dx);
                            const double v = std::max(0.0, out[idx]);
                            if (v > best) {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    f.pooled.data[pool_base + static_cast<std::size_t>(p) * w2 + q] = best;
                    f.argmax[pool_base + static_cast<std::size_t>(p) * w2 + q] = best_idx;
                }
            }
        }
    }

    // Dense head: fc1 + ReLU (features), then fc2 (logits).
    const int flat = a.flat_dim(), hidden = a.hidden_dim, classes = a.num_classes;
    f.fc1_pre = Tensor({n, hidden});
    f.features = Tensor({n, hidden});
    f.logits = Tensor({n, classes});
    for (int s = 0; s < n; ++s) {
        const double* x = f.pooled.data.data() + static_cast<std::size_t>(s) * flat;
        for (int d = 0; d < hidden; ++d) {
            const double* wrow = fc1_w.data.data() + static_cast<std::size_t>(d) * flat;
            double acc = fc1_b[d];
            for (int j = 0; j < flat; ++j) acc += wrow[j] * x[j];
            f.fc1_pre.at2(s, d) = acc;
            f.features.at2(s, d) = acc > 0.0 ? acc : 0.0;
        }
        const double* feat = f.features.data.data() + static_cast<std::size_t>(s) * hidden;
        for (int c = 0; c < classes; ++c) {
            const double* wrow = fc2_w.data.data() + static_cast<std::size_t>(c) * hidden;
            double acc = fc2_b[c];
            for (int d = 0; d < hidden; ++d) acc += wrow[d] * feat[d];
            f.logits.at2(s, c) = acc;
        }
    }
    return f;
}

// Accumulates parameter gradients for one branch given d(loss)/d(features).
void backward_branch(const ModelParams& params, const ForwardCache& f, const Tensor& dfeatures,
                     std::map<std::string, Tensor>& grads) {
    const Architecture& a = params.arch;
    const int n = f.n, hidden = a.hidden_dim, flat = a.flat_dim();
    const int h = a.in_height, w = a.in_width, k = a.kernel, pad = a.kernel / 2;
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    const int cin = a.in_channels, cout = a.conv_channels;
    const int h2 = a.pooled_height(), w2 = a.pooled_width();
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    const Tensor& w1 = param(params, "fc1.weight");

    Tensor& g_w1 = grads.at("fc1.weight");
    Tensor& g_b1 = grads.at("fc1.bias");
    Tensor& g_cw = grads.at("conv.weight");
    Tensor& g_cb = grads.at("conv.bias");

    Tensor dflat({n, flat});
    for (int s = 0; s < n; ++s) {
        // ReLU gate on fc1.
        std::vector<double> dh(hidden);
        for (int d = 0; d < hidden; ++d) {
            dh[d] = f.fc1_pre.at2(s, d) > 0.0 ? dfeatures.at2(s, d) : 0.0;
        }
        const double* x = f.pooled.data.data() + static_cast<std::size_t>(s) * flat;
        double* dx = dflat.data.data() + static_cast<std::size_t>(s) * flat;
        for (int d = 0; d < hidden; ++d) {
            const double g = dh[d];
            if (g == 0.0) continue;
            g_b1[d] += g;
            double* gw = g_w1.data.data() + static_cast<std::size_t>(d) * flat;
            const double* wrow = w1.data.data() + static_cast<std::size_t>(d) * flat;
            for (int j = 0; j < flat; ++j) {
                gw[j] += g * x[j];
                dx[j] += g * wrow[j];
            }
        }
    }

    // Un-pool into the conv plane, gate by the conv ReLU, then reduce into the
    // convolution weight/bias gradients against the cached padded input.
    Tensor dconv({n, cout, h, w});
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < cout; ++o) {
            const std::size_t pool_base = (static_cast<std::size_t>(s) * cout + o) *
                                          (static_cast<std::size_t>(h2) * w2);
            const double* pre = f.conv_pre.data.data() + (static_cast<std::size_t>(s) * cout + o) * hw;
            double* dy = dconv.data.data() + (static_cast<std::size_t>(s) * cout + o) * hw;
            const double* dp = dflat.data.data() + static_cast<std::size_t>(s) * flat +
                               static_cast<std::size_t>(o) * h2 * w2;
            for (int p = 0; p < h2; ++p) {
                for (int q = 0; q < w2; ++q) {
                    const int idx = f.argmax[pool_base + static_cast<std::size_t>(p) * w2 + q];
                    if (pre[idx] > 0.0) dy[idx] += dp[static_cast<std::size_t>(p) * w2 + q];
                }
            }
        }
    }

    const std::size_t pstride = static_cast<std::size_t>(cin) * hp * wp;
    for (int s = 0; s < n; ++s) {
        const double* padded = f.padded.data() + s * pstride;
        for (int o = 0; o < cout; ++o) {
            const double* dy = dconv.data.data() + (static_cast<std::size_t>(s) * cout + o) * hw;
            double bias_acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) bias_acc += dy[i];
            g_cb[o] += bias_acc;
            for (int c = 0; c < cin; ++c) {
                const double* xc = padded + static_cast<std::size_t>(c) * hp * wp;
                for (int u = 0; u < k; ++u) {
                    // k accumulators share one traversal of the dy/x rows.
                    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                    for (int i = 0; i < h; ++i) {
                        const double* dyr = dy + static_cast<std::size_t>(i) * w;
                        const double* xr = xc + static_cast<std::size_t>(i + u) * wp;
                        for (int v = 0; v < k; ++v) {
                            const double* xv = xr + v;
                            double a = 0.0;
                            for (int j = 0; j < w; ++j) a += dyr[j] * xv[j];
                            acc[v] += a;
                        }
                    }
                    double* gw = g_cw.data.data() +
                                 ((static_cast<std::size_t>(o) * cin + c) * k + u) * k;
                    for (int v = 0; v < k; ++v) gw[v] += acc[v];
                }
            }
        }
    }
}

// d(loss)/d(features) for one CE branch plus the classifier-head grads.
Tensor classifier_backward(const ModelParams& params, const ForwardCache& f,
                           const Tensor& dlogits, std::map<std::string, Tensor>& grads) {
    const Architecture& a = params.arch;
    const int n = f.n, hidden = a.hidden_dim, classes = a.num_classes;
    const Tensor& w2 = param(params, "fc2.weight");
    Tensor& g_w2 = grads.at("fc2.weight");
    Tensor& g_b2 = grads.at("fc2.bias");

    Tensor dfeat({n, hidden});
    for (int s = 0; s < n; ++s) {
        const double* feat = f.features.data.data() + static_cast<std::size_t>(s) * hidden;
        double* df = dfeat.data.data() + static_cast<std::size_t>(s) * hidden;
        for (int c = 0; c < classes; ++c) {
            const double g = dlogits.at2(s, c);
            g_b2[c] += g;
            double* gw = g_w2.data.data() + static_cast<std::size_t>(c) * hidden;
            const double* wrow = w2.data.data() + static_cast<std::size_t>(c) * hidden;
            for (int d = 0; d < hidden; ++d) {
                gw[d] += g * feat[d];
                df[d] += g * wrow[d];
            }
        }
    }
    return dfeat;
}

std::map<std::string, Tensor> zero_grads(const Architecture& a) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, shape] : expected_shapes(a)) grads.emplace(name, Tensor(shape));
    return grads;
}

void check_grads_finite(const std::map<std::string, Tensor>& grads, const char* step) {
    for (const auto& [name, g] : grads) {
        if (!all_finite(g)) throw NumericError(name, step);
    }
}

}  // namespace

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    if (arch.kernel % 2 == 0 || arch.kernel <= 0 || arch.kernel > 7) {
        throw ArgumentError("architecture kernel must be odd and in [1,7]");
    }
    ModelParams p;
    p.arch = arch;
    std::mt19937_64 rng(seed);
    auto kaiming = [&](const std::vector<int>& shape, int fan_in) {
        Tensor t(shape);
        const double bound = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.data) v = dist(rng);
        return t;
    };
    const int k = arch.kernel;
    p.tensors.emplace("conv.weight",
                      kaiming({arch.conv_channels, arch.in_channels, k, k}, arch.in_channels * k * k));
    p.tensors.emplace("conv.bias", Tensor({arch.conv_channels}));
    p.tensors.emplace("fc1.weight", kaiming({arch.hidden_dim, arch.flat_dim()}, arch.flat_dim()));
    p.tensors.emplace("fc1.bias", Tensor({arch.hidden_dim}));
    p.tensors.emplace("fc2.weight", kaiming({arch.num_classes, arch.hidden_dim}, arch.hidden_dim));
    p.tensors.emplace("fc2.bias", Tensor({arch.num_classes}));
    return p;
}

Tensor forward_features(const ModelParams& params, const Tensor& batch) {
    return forward_pass(params, batch, "forward_features").features;
}

Tensor forward_logits(const ModelParams& params, const Tensor& features) {
    const Architecture& a = params.arch;
    if (features.shape.size() != 2 || features.shape[1] != a.hidden_dim || features.shape[0] < 1) {
        throw ShapeError("forward_logits", "[Nx" + std::to_string(a.hidden_dim) + "]",
                         shape_string(features.shape));
    }
    const Tensor& w2 = param(params, "fc2.weight");
    const Tensor& b2 = param(params, "fc2.bias");
    const int n = features.shape[0], hidden = a.hidden_dim, classes = a.num_classes;
    Tensor logits({n, classes});
    for (int s = 0; s < n; ++s) {
        const double* feat = features.data.data() + static_cast<std::size_t>(s) * hidden;
        for (int c = 0; c < classes; ++c) {
            const double* wrow = w2.data.data() + static_cast<std::size_t>(c) * hidden;
            double acc = b2[c];
            for (int d = 0; d < hidden; ++d) acc += wrow[d] * feat[d];
            logits.at2(s, c) = acc;
        }
    }
    return logits;
}

LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2 || logits.shape[0] < 1) {
        throw ShapeError("cross_entropy", "[NxC]", shape_string(logits.shape));
    }
    const int n = logits.shape[0], classes = logits.shape[1];
    if (static_cast<int>(labels.size()) != n) {
        throw ArgumentError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n) + " rows");
    }
    for (int s = 0; s < n; ++s) {
        if (labels[s] < 0 || labels[s] >= classes) {
            throw ArgumentError("cross_entropy: label " + std::to_string(labels[s]) +
                                " out of range [0," + std::to_string(classes) + ") at row " +
                                std::to_string(s));
        }
    }

    LossValue loss;
    Tensor dlogits({n, classes});
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        const double* z = logits.data.data() + static_cast<std::size_t>(s) * classes;
        double m = z[0];
        for (int c = 1; c < classes; ++c) m = std::max(m, z[c]);
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
        total += std::log(sum) - (z[labels[s]] - m);
        double* d = dlogits.data.data() + static_cast<std::size_t>(s) * classes;
        for (int c = 0; c < classes; ++c) {
            d[c] = std::exp(z[c] - m) / sum / n;
        }
        d[labels[s]] -= 1.0 / n;
    }
    loss.scalar = total / n;
    loss.ce = loss.scalar;
    loss.gradients.emplace("logits", std::move(dlogits));
    return loss;
}

LossValue backward_ce(const ModelParams& params, const Tensor& batch,
                      const std::vector<int>& labels) {
    const ForwardCache f = forward_pass(params, batch, "backward_ce");
    LossValue ce = cross_entropy(f.logits, labels);

    LossValue out;
    out.scalar = ce.scalar;
    out.ce = ce.scalar;
    out.gradients = zero_grads(params.arch);
    const Tensor dfeat = classifier_backward(params, f, ce.gradients.at("logits"), out.gradients);
    backward_branch(params, f, dfeat, out.gradients);
    check_grads_finite(out.gradients, "backward_ce");
    return out;
}

LossValue backward(const ModelParams& params, const Tensor& batch, const std::vector<int>& labels,
                   const Tensor& aug_batch, const std::vector<int>& aug_labels,
                   double align_weight) {
    if (align_weight < 0.0) throw ArgumentError("backward: align_weight must be >= 0");
    if (batch.shape != aug_batch.shape) {
        throw ShapeError("backward: augmented batch", shape_string(batch.shape),
                         shape_string(aug_batch.shape));
    }

    const ForwardCache fi = forward_pass(params, batch, "backward");
    const ForwardCache fa = forward_pass(params, aug_batch, "backward");
    LossValue ce = cross_entropy(fi.logits, labels);
    LossValue ca = cross_entropy(fa.logits, aug_labels);

    LossValue out;
    out.ce = ce.scalar;
    out.ca = ca.scalar;
    out.gradients = zero_grads(params.arch);

    Tensor dfeat_i = classifier_backward(params, fi, ce.gradients.at("logits"), out.gradients);
    Tensor dfeat_a = classifier_backward(params, fa, ca.gradients.at("logits"), out.gradients);

    if (align_weight > 0.0) {
        const int n = fi.n, hidden = params.arch.hidden_dim;
        const double scale = align_weight * 2.0 / (static_cast<double>(n) * hidden);
        double sq = 0.0;
        for (std::size_t i = 0; i < fi.features.size(); ++i) {
            const double diff = fi.features[i] - fa.features[i];
            sq += diff * diff;
            dfeat_i[i] += scale * diff;
            dfeat_a[i] -= scale * diff;
        }
        out.align = align_weight * sq / (static_cast<double>(n) * hidden);
    }

    backward_branch(params, fi, dfeat_i, out.gradients);
    backward_branch(params, fa, dfeat_a, out.gradients);
    out.scalar = out.ce + out.ca + out.align;
    check_grads_finite(out.gradients, "backward");
    return out;
}

ModelParams sgd_step(ModelParams params, const std::map<std::string, Tensor>& grads, double lr,
                     double weight_decay) {
    if (lr < 0.0) throw ArgumentError("sgd_step: lr must be >= 0");
    if (weight_decay < 0.0) throw ArgumentError("sgd_step: weight_decay must be >= 0");
    for (auto& [name, t] : params.tensors) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw ArgumentError("sgd_step: missing gradient for '" + name + "'");
        }
        const Tensor& g = it->second;
        if (!same_shape(t, g)) {
            throw ShapeError("sgd_step '" + name + "'", shape_string(t.shape),
                             shape_string(g.shape));
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] -= lr * (g[i] + weight_decay * t[i]);
        }
    }
    return params;
}

}  // namespace fedcaug::nn
