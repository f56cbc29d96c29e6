#include <benchmark/benchmark.h>

#include "madf/losses.hpp"
#include "madf/model.hpp"

using namespace madf;

namespace {

template <typename T>
Tensor4<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor4<T> t(n, c, h, w);
    Rng rng(seed);
    t.fill_uniform(rng, T(-1), T(1));
    return t;
}

Tensor4<float> holey_mask(int n, int h, int w) {
    Tensor4<float> m = Tensor4<float>::full(n, 1, h, w, 1.0f);
    for (int i = 0; i < n; ++i)
        for (int y = h / 4; y < 3 * h / 4; ++y)
            for (int x = w / 4; x < w / 2; ++x) m.at(i, 0, y, x) = 0.0f;
    return m;
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    ConvSpec sp{3, 1, 1, c, c};
    auto x = random_tensor<float>(4, c, 32, 32, 1);
    auto w = random_tensor<float>(c, c, 3, 3, 2);
    for (auto _ : state) {
        Graph<float> g;
        auto y = conv2d(g, g.constant(x), g.constant(w), sp);
        benchmark::DoNotOptimize(y->value.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 4ll * 32 * 32 * c * c * 9);
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64)->Arg(128);

static void BM_MadfConvForward(benchmark::State& state) {
    ConvSpec sp{5, 2, 2, 32, 64};
    const int h = 32;
    const int nh = sp.out_dim(h), nw = sp.out_dim(h);
    const int d = sp.c_in * sp.k * sp.k * sp.c_out;
    auto e = random_tensor<float>(2, 32, h, h, 3);
    auto theta = random_tensor<float>(2, 1, nh * nw, d, 4);
    for (auto _ : state) {
        Graph<float> g;
        KernelField<float> field{g.constant(theta), nh, nw, d, sp};
        auto y = madf_conv(g, g.constant(e), field);
        benchmark::DoNotOptimize(y->value.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 2ll * nh * nw * d);
}
BENCHMARK(BM_MadfConvForward);

static void BM_KernelGen(benchmark::State& state) {
    // level-2 shape of the desk preset
    const int c_m = 16, npix = 256, d = 32 * 25 * 64;
    auto m = random_tensor<float>(4, c_m, 16, 16, 5);
    auto w = random_tensor<float>(d, c_m, 1, 1, 6);
    auto b = Tensor4<float>(1, d, 1, 1);
    for (auto _ : state) {
        Graph<float> g;
        auto theta = kernel_gen(g, g.constant(m), g.constant(w), g.constant(b));
        benchmark::DoNotOptimize(theta->value.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 4ll * npix * c_m * d);
}
BENCHMARK(BM_KernelGen);

static void BM_DeskForward(benchmark::State& state) {
    Model<float> model(ModelConfig::desk(), 1);
    auto img = random_tensor<float>(4, 3, 64, 64, 7);
    for (auto& v : img.data) v = std::abs(v);
    auto mask = holey_mask(4, 64, 64);
    for (auto _ : state) {
        Graph<float> g;
        auto out = model.forward_full(g, g.constant(img), g.constant(mask), true);
        benchmark::DoNotOptimize(out.images.back()->value.data.data());
    }
}
BENCHMARK(BM_DeskForward)->Unit(benchmark::kMillisecond);

static void BM_DeskTrainStep(benchmark::State& state) {
    Model<float> model(ModelConfig::desk(), 1);
    FeatureNet<float> net;
    auto img = random_tensor<float>(4, 3, 64, 64, 8);
    for (auto& v : img.data) v = std::abs(v);
    auto mask_t = holey_mask(4, 64, 64);
    std::vector<Mask> masks;
    for (int i = 0; i < 4; ++i) {
        Mask m(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) m.at(y, x) = mask_t.at(i, 0, y, x) != 0 ? 1 : 0;
        masks.push_back(m);
    }
    for (auto _ : state) {
        Graph<float> g;
        auto in = g.constant(img);
        auto mk = g.constant(mask_t);
        auto out = model.forward_full(g, in, mk, true);
        auto sup = supervision_losses(g, out.images, in, mk, masks, net);
        model.params().zero_grad();
        g.backward(sup.total);
        benchmark::DoNotOptimize(sup.report.total);
    }
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond)->Iterations(3);

BENCHMARK_MAIN();
