#include <benchmark/benchmark.h>

#include "spider/field.hpp"
#include "spider/losses.hpp"
#include "spider/trainer.hpp"

using namespace spider;

namespace {

template <typename T>
void unet_encode(benchmark::State& state) {
    set_num_workers(int(state.range(0)));
    ParamStore<T> store;
    Rng rng(1);
    UNetConfig cfg;
    UNet<T> net(store, cfg, rng);
    std::vector<T> img(size_t(128) * 128);
    for (auto& v : img) v = T(rng.uniform());
    for (auto _ : state) {
        Tape<T> tape;
        tape.set_grad_enabled(false);
        Var<T> x = tape.constant(Shape{1, 128, 128}, img.data());
        Var<T> y = net.encode(tape, x);
        benchmark::DoNotOptimize(y.value()[0]);
    }
}

template <typename T>
void full_train_step(benchmark::State& state) {
    set_num_workers(int(state.range(0)));
    ModelConfig mc;
    mc.vol_dims = {64, 64, 64};
    FieldModel<T> model(mc, 1);
    Rng rng(2);
    std::vector<T> pa(size_t(128) * 128), lat(size_t(128) * 128);
    for (auto& v : pa) v = T(rng.uniform());
    for (auto& v : lat) v = T(rng.uniform());
    const int B = 4096;
    std::vector<Vec3> pts(B);
    std::vector<T> ti(B);
    std::vector<int> tc(B);
    for (int i = 0; i < B; ++i) {
        pts[size_t(i)] = {rng.uniform(), rng.uniform(), rng.uniform()};
        ti[size_t(i)] = T(rng.uniform());
        tc[size_t(i)] = int(rng.index(4));
    }
    for (auto _ : state) {
        Tape<T> tape;
        auto out = model.forward(tape, pa, lat, pts);
        Var<T> target = tape.constant(Shape{B, 1}, ti.data());
        Var<T> l_int = loss_intensity(out.intensity, target);
        Var<T> probs = softmax_rows(out.logits);
        Var<T> onehot = tape.constant(Shape{B, 4}, one_hot<T>(tc, 4));
        Var<T> l_seg = loss_dice(probs, onehot, 1e-6);
        Var<T> total = loss_total(l_int, l_seg, 1.0, 0.3);
        tape.backward(total);
        sgd_step(model.params, 1e-3);
        model.params.zero_grad();
        benchmark::DoNotOptimize(total.value()[0]);
    }
}

}  // namespace

BENCHMARK(unet_encode<float>)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(unet_encode<double>)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(full_train_step<float>)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(full_train_step<double>)->Arg(2)->Unit(benchmark::kMillisecond);
