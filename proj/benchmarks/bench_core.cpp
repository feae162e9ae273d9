#include <benchmark/benchmark.h>

#include "octc/cowmask.hpp"
#include "octc/data.hpp"
#include "octc/losses.hpp"
#include "octc/model.hpp"
#include "octc/rng.hpp"
#include "octc/tensor.hpp"

namespace {

using namespace octc;

Tensor random_tensor(Shape shape, uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<float> d(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : d) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

void BM_Conv2d(benchmark::State& state) {
    int c = static_cast<int>(state.range(0));
    Tensor input = random_tensor({1, c, 32, 32}, 1);
    Tensor kernel = random_tensor({c, c, 3, 3}, 2);
    for (auto _ : state) {
        Tensor out = conv2d(input, kernel, 1, 1);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Arg(48);

void BM_Conv2dBackward(benchmark::State& state) {
    int c = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Tensor input = random_tensor({1, c, 32, 32}, 1, true);
        Tensor kernel = random_tensor({c, c, 3, 3}, 2, true);
        Tensor loss = sum(conv2d(input, kernel, 1, 1));
        loss.backward();
        benchmark::DoNotOptimize(kernel.grad().data());
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32);

void BM_BilinearSample(benchmark::State& state) {
    Tensor input = random_tensor({1, 32, 32, 32}, 3);
    Rng rng(4);
    std::vector<float> cd(static_cast<size_t>(2) * 32 * 32);
    for (auto& v : cd) v = static_cast<float>(rng.uniform(0.0, 31.0));
    Tensor coords = Tensor::from_data({1, 2, 32, 32}, std::move(cd));
    for (auto _ : state) {
        Tensor out = bilinear_sample(input, coords);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_BilinearSample);

void BM_CorrelationLookup(benchmark::State& state) {
    ModelConfig cfg;
    cfg.feature_channels = 32;
    cfg.radius = static_cast<int>(state.range(0));
    FlowModel model(cfg);
    Tensor f1 = random_tensor({1, 32, 16, 16}, 5);
    Tensor f2 = random_tensor({1, 32, 16, 16}, 6);
    Tensor flow = Tensor::zeros({1, 2, 16, 16});
    for (auto _ : state) {
        Tensor corr = model.correlation_lookup(f1, f2, flow);
        benchmark::DoNotOptimize(corr.data().data());
    }
}
BENCHMARK(BM_CorrelationLookup)->Arg(2)->Arg(3);

void BM_ModelForward(benchmark::State& state) {
    ModelConfig cfg;
    cfg.feature_channels = 16;
    cfg.hidden_channels = 24;
    cfg.radius = 2;
    cfg.iterations = 3;
    FlowModel model(cfg);
    Rng rng(7);
    Image a(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 3);
    Image b = a;
    for (auto& v : a.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    for (auto& v : b.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    for (auto _ : state) {
        ModelOutput out = model.forward(a, b);
        benchmark::DoNotOptimize(out.flows.back().data().data());
    }
}
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
    ModelConfig cfg;
    cfg.feature_channels = 16;
    cfg.hidden_channels = 24;
    cfg.radius = 2;
    cfg.iterations = 3;
    FlowModel model(cfg);
    Rng rng(8);
    SyntheticScene scene = SyntheticScene::random(32, 32, 3, 2, 2, rng);
    RenderedSequence seq = render_scene(scene);
    LossConfig loss_cfg;
    for (auto _ : state) {
        ModelOutput out = model.forward(seq.frames[0], seq.frames[1]);
        Tensor loss = sequence_loss(out.flows, seq.flows[0], nullptr, loss_cfg);
        loss.backward();
        benchmark::DoNotOptimize(loss.item());
        model.zero_grad();
    }
}
BENCHMARK(BM_TrainStep);

void BM_CowmaskGenerate(benchmark::State& state) {
    CowmaskParams params;
    Rng rng(9);
    for (auto _ : state) {
        OcclusionMask mask = generate_mask(64, 64, params, rng);
        benchmark::DoNotOptimize(mask.data.data());
    }
}
BENCHMARK(BM_CowmaskGenerate);

}  // namespace

BENCHMARK_MAIN();
