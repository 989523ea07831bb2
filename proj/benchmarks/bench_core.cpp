#include <benchmark/benchmark.h>

#include "tilematte/attention.hpp"
#include "tilematte/data.hpp"
#include "tilematte/network.hpp"
#include "tilematte/rng.hpp"
#include "tilematte/tiling.hpp"
#include "tilematte/trimap.hpp"

using namespace tilematte;

namespace {

Tensor random_map(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({c, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
    return t;
}

Trimap mixed_trimap(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Trimap t(h, w);
    for (auto& l : t.labels) {
        double u = rng.uniform();
        l = u < 0.3 ? Region::Background : (u < 0.6 ? Region::Unknown : Region::Foreground);
    }
    return t;
}

KeyedPatch make_patch(int ck, int cv, int side, std::uint64_t seed) {
    KeyedPatch p;
    p.key = random_map(ck, side, side, seed);
    p.value = random_map(cv, side, side, seed + 1);
    p.trimap = mixed_trimap(side, side, seed + 2);
    return p;
}

void bench_conv2d(benchmark::State& state) {
    int side = (int)state.range(0);
    Tensor x = random_map(16, side, side, 1);
    Tensor w = random_map(1, 1, 1, 2);
    w = Tensor({24, 16, 3, 3});
    Rng rng(3);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-0.1, 0.1);
    Tensor b = Tensor::zeros({24});
    Tensor out;
    for (auto _ : state) {
        ad::conv2d_forward(x, w, b, 1, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * (std::int64_t)side * side * 16 * 24 * 9);
}
BENCHMARK(bench_conv2d)->Arg(80)->Arg(160)->Arg(320);

void bench_tgnl(benchmark::State& state) {
    int side = (int)state.range(0);
    KeyedPatch q = make_patch(16, 16, side, 10);
    std::vector<KeyedPatch> ctx;
    for (int i = 0; i < 3; ++i) ctx.push_back(make_patch(16, 16, side, 20 + (std::uint64_t)i));
    for (auto _ : state) {
        Tensor out = tgnl(q, ctx);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bench_tgnl)->Arg(16)->Arg(40)->Arg(80);

void bench_encode(benchmark::State& state) {
    NetConfig cfg;
    Model model(cfg, 5);
    TrainingSample scene = synth_scene(1, 320);
    for (auto _ : state) {
        EncodeResult enc = model.encode(scene.image, scene.trimap);
        benchmark::DoNotOptimize(enc.features.data());
    }
}
BENCHMARK(bench_encode)->Unit(benchmark::kMillisecond);

void bench_stitch(benchmark::State& state) {
    int side = (int)state.range(0);
    PatchPlan plan = plan_patches(side, side, 320, 80);
    Rng rng(7);
    std::vector<std::pair<PatchSpec, AlphaMatte>> inputs;
    for (const auto& p : plan.patches) {
        AlphaMatte a(320, 320);
        for (auto& v : a.v) v = rng.uniform();
        inputs.emplace_back(p, std::move(a));
    }
    for (auto _ : state) {
        AlphaMatte out = stitch(inputs, plan);
        benchmark::DoNotOptimize(out.v.data());
    }
}
BENCHMARK(bench_stitch)->Arg(1280)->Unit(benchmark::kMillisecond);

void bench_trimap_synthesis(benchmark::State& state) {
    int side = (int)state.range(0);
    Rng rng(9);
    AlphaMatte a(side, side);
    for (auto& v : a.v) v = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    for (auto _ : state) {
        Trimap t = dilate_alpha_to_trimap(a, 5, 12);
        benchmark::DoNotOptimize(t.labels.data());
    }
}
BENCHMARK(bench_trimap_synthesis)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
