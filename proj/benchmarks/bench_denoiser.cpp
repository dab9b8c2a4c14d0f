#include "editprop/denoiser.hpp"
#include "editprop/synth.hpp"
#include "editprop/tokenizer.hpp"
#include "editprop/training.hpp"

#include <benchmark/benchmark.h>

using namespace editprop;

namespace {

struct Setup {
    ToyCodec codec;
    ToyDenoiser<float> den;
    LoraAdapter<float> adapter;
    StepContext<float> ctx;

    explicit Setup(int size)
        : den(DenoiserDims{}, NoiseSchedule::make_epsilon(1000), 1) {
        SynthSpec spec;
        spec.frames = 8;
        spec.height = size;
        spec.width = size;
        spec.square = size / 4;
        spec.start_x = 2;
        spec.start_y = size / 3;
        spec.vel_x = 1;
        SynthDataset ds = make_synth(spec);
        LoraConfig lc;
        lc.init_seed = 2;
        adapter = inject(den, lc);
        Rng rng(7);
        for (auto& l : adapter.layers) {
            for (std::ptrdiff_t i = 0; i < l.B.size(); ++i) {
                l.B.data()[i] = float(0.01 * rng.normal());
            }
        }
        den.attach(&adapter);

        auto samples = make_disentangle_samples(ds.video, ds.region, "a square moves");
        ToyTokenizer tok;
        ctx.cond = assemble_bundle_pre_masked<float>(
            samples[0].cond_video, samples[0].mask,
            compose_prompt(tok, samples[0].caption).ids, codec);
        Array4<float> x0 = codec.encode<float>(samples[0].target);
        Array4<float> eps(x0.c, x0.t, x0.h, x0.w);
        for (auto& e : eps.data) e = float(rng.normal());
        ctx.t = 500;
        ctx.x_t = add_noise(den.schedule(), x0, eps, ctx.t);
        ctx.target = prediction_target(den.schedule(), x0, eps);
    }
};

} // namespace

static void BM_DenoiserPredict(benchmark::State& state) {
    Setup s(int(state.range(0)));
    for (auto _ : state) {
        Array4<float> out = s.den.predict(s.ctx.x_t, s.ctx.t, s.ctx.cond);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_DenoiserPredict)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_TrainStepLossAndGrads(benchmark::State& state) {
    Setup s(int(state.range(0)));
    for (auto _ : state) {
        auto [loss, grads] = step_loss_and_grads(s.den, s.ctx);
        benchmark::DoNotOptimize(loss);
        benchmark::DoNotOptimize(grads.a.data());
    }
}
BENCHMARK(BM_TrainStepLossAndGrads)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
