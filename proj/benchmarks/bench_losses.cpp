#include <benchmark/benchmark.h>

#include "motra/losses.hpp"

using namespace motra;

static void BM_PyramidPerceptualRec(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng = make_rng(5);
    RandomConvFeatures fx(1234);
    LossWeights w;
    Var gt = Var::leaf(random_uniform<float>(rng, {3, n, n}, 0.0f, 1.0f));
    for (auto _ : state) {
        Var pred = Var::leaf(random_uniform<float>(rng, {3, n, n}, 0.0f, 1.0f), true);
        auto loss = pyramid_perceptual_rec(pred, gt, fx, w, 2);
        loss.backward();
        benchmark::DoNotOptimize(pred.grad().data());
    }
}
BENCHMARK(BM_PyramidPerceptualRec)->Arg(64)->Arg(128);

static void BM_AffineReg(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng = make_rng(6);
    Var flow = Var::leaf(random_uniform<float>(rng, {2, n, n}, -0.3f, 0.3f));
    for (auto _ : state) {
        auto loss = affine_reg(flow);
        benchmark::DoNotOptimize(loss.val()[0]);
    }
}
BENCHMARK(BM_AffineReg)->Arg(32)->Arg(64);
