#include "editprop/codec.hpp"
#include "editprop/conditioning.hpp"
#include "editprop/rng.hpp"

#include <benchmark/benchmark.h>

using namespace editprop;

namespace {

VideoTensor random_video(int t, int h, int w, uint64_t seed) {
    VideoTensor v = make_video(t, h, w);
    Rng rng(seed);
    for (auto& x : v.data.data) x = float(rng.uniform(-1.0, 1.0));
    return v;
}

PixelMask random_mask(int t, int h, int w, uint64_t seed) {
    PixelMask m(t, h, w);
    Rng rng(seed);
    for (auto& x : m.data) x = rng.uniform() < 0.5 ? 1 : 0;
    return m;
}

} // namespace

static void BM_BuildConditionVideo(benchmark::State& state) {
    const int size = int(state.range(0));
    VideoTensor v = random_video(8, size, size, 1);
    PixelMask m = random_mask(8, size, size, 2);
    for (auto _ : state) {
        VideoTensor c = build_condition_video(v, m);
        benchmark::DoNotOptimize(c.data.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * v.data.size());
}
BENCHMARK(BM_BuildConditionVideo)->Arg(32)->Arg(64)->Arg(128);

static void BM_ToLatentMask(benchmark::State& state) {
    const int size = int(state.range(0));
    PixelMask m = random_mask(8, size, size, 3);
    CodecSpec spec;
    for (auto _ : state) {
        LatentMask lm = to_latent_mask(m, spec);
        benchmark::DoNotOptimize(lm.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * m.data.size());
}
BENCHMARK(BM_ToLatentMask)->Arg(32)->Arg(64)->Arg(128);

static void BM_CodecEncode(benchmark::State& state) {
    const int size = int(state.range(0));
    ToyCodec codec;
    VideoTensor v = random_video(8, size, size, 4);
    for (auto _ : state) {
        Array4<float> z = codec.encode<float>(v);
        benchmark::DoNotOptimize(z.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * v.data.size());
}
BENCHMARK(BM_CodecEncode)->Arg(32)->Arg(64)->Arg(128);

static void BM_CodecDecode(benchmark::State& state) {
    const int size = int(state.range(0));
    ToyCodec codec;
    Array4<float> z = codec.encode<float>(random_video(8, size, size, 5));
    for (auto _ : state) {
        VideoTensor v = codec.decode(z);
        benchmark::DoNotOptimize(v.data.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * z.size());
}
BENCHMARK(BM_CodecDecode)->Arg(32)->Arg(64)->Arg(128);
