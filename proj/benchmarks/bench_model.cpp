#include <benchmark/benchmark.h>

#include "pixmamba/metrics.hpp"
#include "pixmamba/model.hpp"

using namespace pixmamba;

namespace {

Tensor<float> image_batch(std::int64_t B, std::int64_t H, std::int64_t W) {
    Rng rng(3);
    Tensor<float> t({B, 3, H, W});
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform());
    return t;
}

void BM_ModelForward(benchmark::State& state) {
    PixMamba<float> model(ModelConfig{}, 0);
    const auto x = image_batch(state.range(0), 64, 64);
    for (auto _ : state) benchmark::DoNotOptimize(model.enhance(x));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    PixMamba<float> model(ModelConfig{}, 0);
    const auto x = image_batch(4, 64, 64);
    const auto y = image_batch(4, 64, 64);
    for (auto _ : state) {
        GradTape<float> tape;
        auto loss = metrics::charbonnier(model.forward(x), y);
        tape.backward(loss);
        model.parameters().zero_grad();
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
    const auto img = image_batch(1, 64, 64).cast<double>();
    const auto a = Tensor<double>({3, 64, 64}, {img.data().begin(), img.data().end()});
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::uiqm(a));
        benchmark::DoNotOptimize(metrics::uciqe(a));
        benchmark::DoNotOptimize(metrics::ssim(a, a));
    }
}
BENCHMARK(BM_Metrics)->Unit(benchmark::kMillisecond);

}  // namespace
