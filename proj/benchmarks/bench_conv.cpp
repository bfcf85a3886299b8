#include <benchmark/benchmark.h>

#include "motra/nn.hpp"

using namespace motra;

static void BM_Conv3x3Forward(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    int c = static_cast<int>(state.range(1));
    Rng rng = make_rng(3);
    ParamRegistry reg;
    nn::Conv2dT<float> conv(reg, rng, "c", c, c, 3, 1, 1);
    Var x = Var::leaf(random_uniform<float>(rng, {c, n, n}, -1.0f, 1.0f));
    for (auto _ : state) {
        auto y = conv(x);
        benchmark::DoNotOptimize(y.val().data());
    }
    state.SetItemsProcessed(state.iterations() * 2L * c * c * 9 * n * n);
}
BENCHMARK(BM_Conv3x3Forward)->Args({64, 16})->Args({64, 32})->Args({128, 16});

static void BM_Conv3x3Backward(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    int c = static_cast<int>(state.range(1));
    Rng rng = make_rng(4);
    ParamRegistry reg;
    nn::Conv2dT<float> conv(reg, rng, "c", c, c, 3, 1, 1);
    for (auto _ : state) {
        Var x = Var::leaf(random_uniform<float>(rng, {c, n, n}, -1.0f, 1.0f), true);
        auto loss = ag::mean(ag::square(conv(x)));
        loss.backward();
        reg.zero_grad_all();
        benchmark::DoNotOptimize(x.grad().data());
    }
    state.SetItemsProcessed(state.iterations() * 6L * c * c * 9 * n * n);
}
BENCHMARK(BM_Conv3x3Backward)->Args({64, 16})->Args({128, 16});
