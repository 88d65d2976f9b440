#include <benchmark/benchmark.h>

#include "pixmamba/rng.hpp"
#include "pixmamba/ssm.hpp"
#include "pixmamba/vision_scan.hpp"

using namespace pixmamba;

namespace {

template <typename T>
Tensor<T> uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
ssm::ScanInput<T> scan_input(std::int64_t B, std::int64_t L, std::int64_t Dm, std::int64_t N) {
    Rng rng(42);
    ssm::ScanInput<T> in;
    in.x = uniform<T>({B, L, Dm}, rng, -1, 1);
    in.delta = uniform<T>({B, L, Dm}, rng, 0.01, 1);
    in.A = uniform<T>({Dm, N}, rng, -2, -0.05);
    in.Bmat = uniform<T>({B, L, N}, rng, -1, 1);
    in.Cmat = uniform<T>({B, L, N}, rng, -1, 1);
    in.D = uniform<T>({Dm}, rng, -1, 1);
    return in;
}

void set_counters(benchmark::State& state, std::int64_t updates) {
    state.counters["updates/s"] =
        benchmark::Counter(static_cast<double>(updates), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ScanSequential(benchmark::State& state) {
    const auto L = state.range(0);
    const auto in = scan_input<float>(1, L, 16, 8);
    for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_sequential(in).y);
    set_counters(state, L * 16 * 8);
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(256, 65536)->Unit(benchmark::kMicrosecond);

void BM_ScanParallel(benchmark::State& state) {
    const auto L = state.range(0);
    const auto in = scan_input<float>(1, L, 16, 8);
    for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_parallel(in).y);
    set_counters(state, L * 16 * 8);
}
BENCHMARK(BM_ScanParallel)->RangeMultiplier(4)->Range(256, 65536)->Unit(benchmark::kMicrosecond);

void BM_ScanBackward(benchmark::State& state) {
    const auto L = state.range(0);
    const auto in = scan_input<float>(1, L, 16, 8);
    Rng grng(7);
    const auto g = uniform<float>({1, L, 16}, grng, -1, 1);
    for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_backward(in, g).x);
    set_counters(state, L * 16 * 8);
}
BENCHMARK(BM_ScanBackward)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond);

void BM_ScanDouble(benchmark::State& state) {
    const auto in = scan_input<double>(1, 4096, 16, 8);
    for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_sequential(in).y);
    set_counters(state, 4096 * 16 * 8);
}
BENCHMARK(BM_ScanDouble)->Unit(benchmark::kMicrosecond);

void BM_Ess2dDirections(benchmark::State& state) {
    ParameterRegistry<float> reg;
    Rng init(1);
    EmbConfig cfg;
    cfg.dim = 16;
    cfg.directions = default_directions(static_cast<int>(state.range(0)));
    Ess2d<float> ess(ParamFactory<float>(reg, init), cfg);
    Rng rng(2);
    const auto x = uniform<float>({1, cfg.inner_dim(), 16, 16}, rng, -1, 1);
    for (auto _ : state) benchmark::DoNotOptimize(ess(x));
}
BENCHMARK(BM_Ess2dDirections)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace
