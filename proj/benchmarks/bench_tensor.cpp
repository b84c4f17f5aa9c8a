#include <benchmark/benchmark.h>

#include "spider/nn.hpp"
#include "spider/trainer.hpp"

using namespace spider;

namespace {

template <typename T>
void conv_fwd_bwd(benchmark::State& state) {
    set_num_workers(int(state.range(0)));
    const int C = 16, H = 128, W = 128;
    ParamStore<T> store;
    Rng rng(1);
    Conv2dLayer<T> layer(store, "c", C, C, 3, rng);
    std::vector<T> img(size_t(C) * H * W);
    for (auto& v : img) v = T(rng.uniform());
    for (auto _ : state) {
        Tape<T> tape;
        Var<T> x = tape.constant(Shape{C, H, W}, img.data());
        Var<T> y = layer(tape, x);
        Var<T> l = mean(y);
        tape.backward(l);
        benchmark::DoNotOptimize(store.find("c.w")->grad[0]);
        store.zero_grad();
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * C * C * H * W * 9 * 3);
}

template <typename T>
void linear_fwd_bwd(benchmark::State& state) {
    set_num_workers(int(state.range(0)));
    const int B = 4096, I = 152, O = 128;
    ParamStore<T> store;
    Rng rng(1);
    LinearLayer<T> layer(store, "l", I, O, rng);
    std::vector<T> x(size_t(B) * I);
    for (auto& v : x) v = T(rng.uniform());
    for (auto _ : state) {
        Tape<T> tape;
        Var<T> xv = tape.constant(Shape{B, I}, x.data());
        Var<T> y = layer(tape, xv);
        Var<T> l = mean(y);
        tape.backward(l);
        benchmark::DoNotOptimize(store.find("l.w")->grad[0]);
        store.zero_grad();
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * B * I * O * 3);
}

}  // namespace

BENCHMARK(conv_fwd_bwd<float>)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_fwd_bwd<double>)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(linear_fwd_bwd<float>)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(linear_fwd_bwd<double>)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
