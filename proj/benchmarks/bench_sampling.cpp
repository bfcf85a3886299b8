#include <benchmark/benchmark.h>

#include "motra/sampling.hpp"
#include "motra/warp_branch.hpp"

using namespace motra;

static void BM_BilinearSampleForward(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng = make_rng(1);
    Var src = Var::leaf(random_uniform<float>(rng, {16, n, n}, -1.0f, 1.0f));
    Var grid = Var::leaf(random_uniform<float>(rng, {2, n, n}, -0.9f, 0.9f));
    for (auto _ : state) {
        auto out = bilinear_sample(src, grid);
        benchmark::DoNotOptimize(out.val().data());
    }
    state.SetItemsProcessed(state.iterations() * 16 * n * n);
}
BENCHMARK(BM_BilinearSampleForward)->Arg(64)->Arg(128);

static void BM_WarpFuseBackward(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng = make_rng(2);
    for (auto _ : state) {
        Var z = Var::leaf(random_uniform<float>(rng, {16, n, n}, -1.0f, 1.0f), true);
        Var f = Var::leaf(random_uniform<float>(rng, {2, n, n}, -0.2f, 0.2f), true);
        Var o = Var::leaf(random_uniform<float>(rng, {1, n, n}, 0.0f, 1.0f), true);
        Var zp = Var::leaf(random_uniform<float>(rng, {16, n, n}, -1.0f, 1.0f), true);
        auto loss = ag::mean(ag::square(warp_fuse(z, f, o, zp)));
        loss.backward();
        benchmark::DoNotOptimize(z.grad().data());
    }
    state.SetItemsProcessed(state.iterations() * 16 * n * n);
}
BENCHMARK(BM_WarpFuseBackward)->Arg(64)->Arg(128);
