#include <benchmark/benchmark.h>

#include <random>

#include "fedcaug/crl.hpp"
#include "fedcaug/dataset.hpp"
#include "fedcaug/fedsim.hpp"
#include "fedcaug/image.hpp"
#include "fedcaug/model.hpp"

using namespace fedcaug;

namespace {

nn::Architecture bench_arch() {
    nn::Architecture a;  // the ColorMNIST-scale SimpleCNN
    return a;
}

nn::Tensor random_batch(int n, const nn::Architecture& a, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    nn::Tensor t({n, a.in_channels, a.in_height, a.in_width});
    for (auto& v : t.data) v = dist(rng);
    return t;
}

img::Image random_image(int side, int channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    img::Image im(side, side, channels);
    for (auto& p : im.pixels) p = dist(rng);
    return im;
}

void ForwardFeatures(benchmark::State& state) {
    const nn::Architecture a = bench_arch();
    const nn::ModelParams p = nn::init_params(a, 1);
    const nn::Tensor batch = random_batch(static_cast<int>(state.range(0)), a, 2);
    for (auto _ : state) {
        auto f = nn::forward_features(p, batch);
        benchmark::DoNotOptimize(f);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(ForwardFeatures)->Arg(16)->Arg(64);

void BackwardFullObjective(benchmark::State& state) {
    const nn::Architecture a = bench_arch();
    const nn::ModelParams p = nn::init_params(a, 1);
    const int n = static_cast<int>(state.range(0));
    const nn::Tensor batch = random_batch(n, a, 2);
    const nn::Tensor aug = random_batch(n, a, 3);
    std::vector<int> labels(n);
    std::mt19937_64 rng(4);
    for (auto& l : labels) l = rng() % a.num_classes;
    for (auto _ : state) {
        auto loss = nn::backward(p, batch, labels, aug, labels, 0.1);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BackwardFullObjective)->Arg(16)->Arg(64);

void CannyEdges(benchmark::State& state) {
    const img::Image im = random_image(static_cast<int>(state.range(0)), 3, 5);
    for (auto _ : state) {
        auto e = img::canny(im, 0.1, 0.3, 1.0);
        benchmark::DoNotOptimize(e);
    }
}
BENCHMARK(CannyEdges)->Arg(28)->Arg(64);

void SpectralResidual(benchmark::State& state) {
    const img::Image im = random_image(static_cast<int>(state.range(0)), 1, 6);
    for (auto _ : state) {
        auto m = crl::spectral_residual_saliency(im, 3);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(SpectralResidual)->Arg(28)->Arg(64);

void SharpenAndLocalize(benchmark::State& state) {
    const auto samples = data::synth_colored_digits({}, 1, 7);
    crl::CrlConfig cfg;
    for (auto _ : state) {
        for (const auto& s : samples) {
            auto src = crl::sharpen_and_localize(s.image, cfg);
            benchmark::DoNotOptimize(src);
        }
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(samples.size()));
}
BENCHMARK(SharpenAndLocalize);

void AggregateParams(benchmark::State& state) {
    const nn::Architecture a = bench_arch();
    std::vector<std::pair<nn::ModelParams, std::size_t>> updates;
    for (int k = 0; k < 5; ++k) updates.emplace_back(nn::init_params(a, k), 100 + k);
    for (auto _ : state) {
        auto agg = fed::fedavg_aggregate(updates);
        benchmark::DoNotOptimize(agg);
    }
}
BENCHMARK(AggregateParams);

}  // namespace

BENCHMARK_MAIN();
