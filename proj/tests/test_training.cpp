#include "editprop/training.hpp"

#include "editprop/synth.hpp"
#include "editprop/tokenizer.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace editprop;

namespace {

SynthSpec small_spec() {
    SynthSpec spec;
    spec.frames = 8;
    spec.height = 16;
    spec.width = 16;
    spec.square = 4;
    spec.start_x = 2;
    spec.start_y = 5;
    spec.vel_x = 1;
    spec.seed = 3;
    return spec;
}

SynthDataset small_scene() { return make_synth(small_spec()); }

StepContext<float> fixed_step_context(const ToyDenoiser<float>& den, const TrainSample& s,
                                      const ToyCodec& codec, int t, uint64_t seed) {
    ToyTokenizer tok;
    StepContext<float> ctx;
    ctx.cond = assemble_bundle_pre_masked<float>(s.cond_video, s.mask,
                                                 compose_prompt(tok, s.caption).ids, codec);
    Array4<float> x0 = codec.encode<float>(s.target);
    Array4<float> eps(x0.c, x0.t, x0.h, x0.w);
    Rng rng(seed);
    for (auto& e : eps.data) e = float(rng.normal());
    ctx.t = t;
    ctx.x_t = add_noise(den.schedule(), x0, eps, t);
    ctx.target = prediction_target(den.schedule(), x0, eps);
    return ctx;
}

} // namespace

TEST_CASE("make_naive_samples") {
    VideoTensor video = test_util::random_video(8, 8, 8, 1);
    auto samples = make_naive_samples(video, "cap");
    REQUIRE(samples.size() == 1);
    const TrainSample& s = samples[0];
    CHECK(s.mask.count_ones() == std::size_t(8) * 8); // one full frame
    CHECK(s.target.data.data == video.data.data);
    CHECK(s.caption == "cap");
    for (int ci = 0; ci < 3; ++ci)
        for (int ti = 1; ti < 8; ++ti)
            for (int yi = 0; yi < 8; ++yi)
                for (int xi = 0; xi < 8; ++xi) CHECK(s.cond_video.data.at(ci, ti, yi, xi) == 0.0f);

    CHECK_THROWS_AS(make_naive_samples(test_util::random_video(1, 8, 8, 2), "cap"), ShapeError);
}

TEST_CASE("make_disentangle_samples") {
    SynthDataset ds = small_scene();
    auto samples = make_disentangle_samples(ds.video, ds.region, "cap");
    REQUIRE(samples.size() == 1);
    const TrainSample& s = samples[0];
    CHECK(s.target.data.data == ds.video.data.data);

    // Elementwise: condition is zero exactly inside the per-frame region
    // (frames 2..T) and equals the input elsewhere.
    for (int ci = 0; ci < 3; ++ci)
        for (int ti = 0; ti < ds.video.data.t; ++ti)
            for (int yi = 0; yi < 16; ++yi)
                for (int xi = 0; xi < 16; ++xi) {
                    const bool blanked = ti >= 1 && ds.region.at(ti, yi, xi) == 1;
                    if (blanked) {
                        CHECK(s.cond_video.data.at(ci, ti, yi, xi) == 0.0f);
                    } else {
                        CHECK(s.cond_video.data.at(ci, ti, yi, xi) ==
                              ds.video.data.at(ci, ti, yi, xi));
                    }
                }

    // Degenerate regions.
    PixelMask empty(8, 16, 16, 0);
    auto all_preserved = make_disentangle_samples(ds.video, empty, "cap");
    CHECK(all_preserved[0].mask.count_ones() == std::size_t(8) * 16 * 16);
    PixelMask full(8, 16, 16, 1);
    auto naive_like = make_disentangle_samples(ds.video, full, "cap");
    CHECK(naive_like[0].mask.data ==
          make_mask(MaskConfigKind::DefaultI2V, 8, 16, 16).data);

    PixelMask wrong(8, 8, 8, 1);
    CHECK_THROWS_AS(make_disentangle_samples(ds.video, wrong, "cap"), ShapeError);
}

TEST_CASE("make_appearance_samples") {
    SynthDataset ds = small_scene();
    std::vector<AppearancePair> pairs;
    for (int k = 2; k <= 4; ++k) {
        AppearancePair p;
        p.pre_frame = frame_at(ds.video, k);
        p.edited_frame = test_util::random_video(1, 16, 16, 40 + uint64_t(k));
        p.region = slice_mask(ds.region, k, 1);
        pairs.push_back(std::move(p));
    }
    auto samples = make_appearance_samples(pairs, "cap");
    REQUIRE(samples.size() == 3); // one sample per frame, never concatenated
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(samples[i].target.data.t == 1);
        CHECK(samples[i].target.data.data == pairs[i].edited_frame.data.data);
        for (int ci = 0; ci < 3; ++ci)
            for (int yi = 0; yi < 16; ++yi)
                for (int xi = 0; xi < 16; ++xi) {
                    if (pairs[i].region.at(0, yi, xi)) {
                        CHECK(samples[i].cond_video.data.at(ci, 0, yi, xi) == 0.0f);
                    } else {
                        CHECK(samples[i].cond_video.data.at(ci, 0, yi, xi) ==
                              pairs[i].pre_frame.data.at(ci, 0, yi, xi));
                    }
                }
    }

    AppearancePair bad = pairs[0];
    bad.region = PixelMask(1, 16, 16, 0);
    CHECK_THROWS_AS(make_appearance_samples({bad}, "cap"), ShapeError);
    AppearancePair mismatched = pairs[0];
    mismatched.edited_frame = test_util::random_video(1, 8, 8, 50);
    CHECK_THROWS_AS(make_appearance_samples({mismatched}, "cap"), ShapeError);
    CHECK_THROWS_AS(make_appearance_samples({}, "cap"), ShapeError);
}

TEST_CASE("split_clips reproduces the 49/13/1 layout") {
    VideoTensor video = test_util::random_video(49, 4, 4, 60);
    auto clips = split_clips(video, 13, 1);
    REQUIRE(clips.size() == 4);
    // Spans [1,13],[13,25],[25,37],[37,49] in 1-based frame numbers.
    const int starts[4] = {0, 12, 24, 36};
    for (int k = 0; k < 4; ++k) {
        CHECK(clips[std::size_t(k)].data.t == 13);
        for (int ti = 0; ti < 13; ++ti)
            for (int yi = 0; yi < 4; ++yi)
                CHECK(clips[std::size_t(k)].data.at(0, ti, yi, 0) ==
                      video.data.at(0, starts[k] + ti, yi, 0));
    }
    // Consecutive clips share exactly one frame.
    for (int k = 0; k + 1 < 4; ++k) {
        for (int yi = 0; yi < 4; ++yi)
            for (int xi = 0; xi < 4; ++xi)
                CHECK(clips[std::size_t(k)].data.at(1, 12, yi, xi) ==
                      clips[std::size_t(k) + 1].data.at(1, 0, yi, xi));
    }

    auto single = split_clips(test_util::random_video(13, 4, 4, 61), 13, 1);
    CHECK(single.size() == 1);

    CHECK_THROWS_AS(split_clips(video, 12, 1), ShapeError);
    CHECK_THROWS_AS(split_clips(video, 5, 5), ShapeError);
}

TEST_CASE("clip concatenation with dedup reconstructs the video exactly") {
    struct Layout {
        int t, len, ov;
    };
    for (Layout l : {Layout{49, 13, 1}, Layout{25, 7, 1}, Layout{16, 4, 0}, Layout{10, 4, 2}}) {
        VideoTensor video = test_util::random_video(l.t, 4, 6, uint64_t(70 + l.t));
        auto clips = split_clips(video, l.len, l.ov);
        VideoTensor back = concat_clips(clips, l.ov);
        CHECK(back.data.data == video.data.data);
    }
}

TEST_CASE("training-loss gradients match central finite differences in 64-bit") {
    SynthSpec spec;
    spec.frames = 4;
    spec.height = 8;
    spec.width = 8;
    spec.square = 3;
    spec.start_x = 1;
    spec.start_y = 2;
    spec.vel_x = 1;
    SynthDataset ds = make_synth(spec);

    ToyCodec codec;
    ToyDenoiser<double> den({}, NoiseSchedule::make_epsilon(1000), 42);
    LoraConfig lc;
    lc.rank = 4;
    lc.init_seed = 9;
    LoraAdapter<double> adapter = inject(den, lc);
    Rng rng(123);
    for (auto& l : adapter.layers) {
        for (std::ptrdiff_t i = 0; i < l.B.size(); ++i) l.B.data()[i] = 0.02 * rng.normal();
    }
    den.attach(&adapter);

    auto samples = make_disentangle_samples(ds.video, ds.region, "a square moves");
    ToyTokenizer tok;
    StepContext<double> ctx;
    ctx.cond = assemble_bundle_pre_masked<double>(
        samples[0].cond_video, samples[0].mask, compose_prompt(tok, samples[0].caption).ids, codec);
    Array4<double> x0 = codec.encode<double>(samples[0].target);
    Array4<double> eps(x0.c, x0.t, x0.h, x0.w);
    for (auto& e : eps.data) e = rng.normal();
    ctx.t = 500;
    ctx.x_t = add_noise(den.schedule(), x0, eps, ctx.t);
    ctx.target = prediction_target(den.schedule(), x0, eps);

    auto [loss, grads] = step_loss_and_grads(den, ctx);
    CHECK(std::isfinite(loss));

    const double h = 1e-4;
    for (int k = 0; k < 20; ++k) {
        const std::size_t li = std::size_t(rng.uniform_int(0, int(adapter.layers.size()) - 1));
        auto& layer = adapter.layers[li];
        const bool pick_a = rng.uniform() < 0.5;
        auto& m = pick_a ? layer.A : layer.B;
        const auto& gm = pick_a ? grads.a[li] : grads.b[li];
        const std::ptrdiff_t idx = rng.uniform_int(0, int(m.size()) - 1);
        const double orig = m.data()[idx];
        m.data()[idx] = orig + h;
        const double lp = step_loss_value(den, ctx);
        m.data()[idx] = orig - h;
        const double lm = step_loss_value(den, ctx);
        m.data()[idx] = orig;
        const double fd = (lp - lm) / (2 * h);
        const double ad = gm.data()[idx];
        const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
        CHECK(rel < 1e-3);
    }
}

TEST_CASE("loss with a zero-delta adapter equals the base-model loss exactly") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
    auto samples = make_naive_samples(ds.video, "sq");

    StepContext<float> ctx = fixed_step_context(den, samples[0], codec, 300, 55);
    const float base_loss = step_loss_value(den, ctx);

    LoraConfig lc;
    LoraAdapter<float> adapter = inject(den, lc);
    den.attach(&adapter);
    const float adapted_loss = step_loss_value(den, ctx);
    CHECK(adapted_loss == base_loss);
}

TEST_CASE("train: zero learning rate leaves the adapter untouched") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
    LoraConfig lc;
    lc.init_seed = 5;
    LoraAdapter<float> adapter = inject(den, lc);
    den.attach(&adapter);
    const uint64_t before = adapter.state_fingerprint();

    TrainPlan plan;
    plan.stage = TrainStage::Naive;
    plan.steps = 5;
    plan.learning_rate = 0.0;
    plan.seed = 3;
    train(den, adapter, make_naive_samples(ds.video, "sq"), plan, codec);
    CHECK(adapter.state_fingerprint() == before);
}

TEST_CASE("train: same seed gives identical traces, different seed differs") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    auto run = [&](uint64_t seed) {
        ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
        LoraConfig lc;
        lc.init_seed = 5;
        LoraAdapter<float> adapter = inject(den, lc);
        den.attach(&adapter);
        TrainPlan plan;
        plan.stage = TrainStage::Naive;
        plan.steps = 6;
        plan.learning_rate = 1e-3;
        plan.seed = seed;
        TrainResult r = train(den, adapter, make_naive_samples(ds.video, "sq"), plan, codec);
        return std::make_pair(r, adapter.state_fingerprint());
    };
    auto [r1, fp1] = run(9);
    auto [r2, fp2] = run(9);
    auto [r3, fp3] = run(10);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (std::size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].loss == r2.trace[i].loss);
        CHECK(r1.trace[i].t == r2.trace[i].t);
        CHECK(r1.trace[i].sample_index == r2.trace[i].sample_index);
    }
    CHECK(fp1 == fp2);
    CHECK(fp1 != fp3);
}

TEST_CASE("train: base weights stay frozen through training") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
    std::vector<uint64_t> before;
    for (const auto& [name, m] : den.params().items) before.push_back(fingerprint(m));

    LoraConfig lc;
    LoraAdapter<float> adapter = inject(den, lc);
    den.attach(&adapter);
    TrainPlan plan;
    plan.stage = TrainStage::Naive;
    plan.steps = 8;
    plan.learning_rate = 1e-2;
    plan.seed = 3;
    train(den, adapter, make_naive_samples(ds.video, "sq"), plan, codec);

    std::size_t i = 0;
    for (const auto& [name, m] : den.params().items) CHECK(fingerprint(m) == before[i++]);
    CHECK_FALSE(adapter.all_deltas_zero()); // training actually moved the adapter
}

TEST_CASE("train: non-finite loss aborts with step diagnostics") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
    den.params().require("output_proj.bias")(0, 0) = std::numeric_limits<float>::quiet_NaN();
    LoraConfig lc;
    LoraAdapter<float> adapter = inject(den, lc);
    den.attach(&adapter);
    TrainPlan plan;
    plan.stage = TrainStage::Naive;
    plan.steps = 3;
    plan.seed = 3;
    try {
        train(den, adapter, make_naive_samples(ds.video, "sq"), plan, codec);
        FAIL("expected NanLossError");
    } catch (const NanLossError& e) {
        CHECK(e.step == 1);
        CHECK(e.timestep >= 0);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("train rejects detached adapters and mismatched schedule modes") {
    SynthDataset ds = small_scene();
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);
    LoraConfig lc;
    LoraAdapter<float> adapter = inject(den, lc);
    TrainPlan plan;
    plan.stage = TrainStage::Naive;
    plan.steps = 1;
    auto samples = make_naive_samples(ds.video, "sq");
    CHECK_THROWS_AS(train(den, adapter, samples, plan, codec), ConfigError);

    den.attach(&adapter);
    plan.schedule_mode = ScheduleMode::RectifiedFlow;
    CHECK_THROWS_AS(train(den, adapter, samples, plan, codec), ConfigError);
}

TEST_CASE("run_two_stage: stage-1-only equals plain training, stage 2 continues the adapter") {
    SynthDataset ds = small_scene();
    ToyCodec codec;

    TrainPlan plan1;
    plan1.stage = TrainStage::Disentangle;
    plan1.steps = 4;
    plan1.learning_rate = 1e-3;
    plan1.seed = 17;
    plan1.lora.init_seed = 2;

    TwoStageInputs inputs;
    inputs.video = ds.video;
    inputs.edit_region = &ds.region;
    inputs.caption = "sq";

    ToyDenoiser<float> den1({}, NoiseSchedule::make_epsilon(1000), 7);
    TwoStageResult only1 = run_two_stage(den1, inputs, plan1, std::nullopt, codec);
    CHECK(only1.trace.size() == 4);
    CHECK(only1.stage1_fingerprint == only1.adapter.state_fingerprint());
    CHECK(only1.stage2_fingerprint == 0);

    AppearancePair pair;
    pair.pre_frame = frame_at(ds.video, 3);
    pair.edited_frame = synth_edited_frame(small_spec(), 3);
    pair.region = slice_mask(ds.region, 3, 1);
    inputs.appearance_pairs = {pair};

    TrainPlan plan2;
    plan2.stage = TrainStage::Appearance;
    plan2.steps = 3;
    plan2.learning_rate = 1e-3;
    plan2.seed = 19;
    plan2.lora.init_seed = 2;

    ToyDenoiser<float> den2({}, NoiseSchedule::make_epsilon(1000), 7);
    TwoStageResult both = run_two_stage(den2, inputs, plan1, plan2, codec);
    CHECK(both.trace.size() == 7);
    CHECK(both.stage1_fingerprint == only1.stage1_fingerprint); // stage 2 starts from stage 1
    CHECK(both.stage2_fingerprint == both.adapter.state_fingerprint());
    CHECK(both.stage2_fingerprint != both.stage1_fingerprint);
    CHECK(both.trace[4].stage == TrainStage::Appearance);
    CHECK(both.trace[4].step == 5); // numbering continues across stages

    // Stage 1 must be a video stage; stage 2 requires pairs.
    TrainPlan bad = plan1;
    bad.stage = TrainStage::Appearance;
    ToyDenoiser<float> den3({}, NoiseSchedule::make_epsilon(1000), 7);
    CHECK_THROWS_AS(run_two_stage(den3, inputs, bad, std::nullopt, codec), ConfigError);
    TwoStageInputs no_pairs = inputs;
    no_pairs.appearance_pairs.clear();
    CHECK_THROWS_AS(run_two_stage(den3, no_pairs, plan1, plan2, codec), ConfigError);
}

TEST_CASE("run_two_stage with clip splitting builds one sample per clip") {
    SynthSpec spec;
    spec.frames = 13;
    spec.height = 16;
    spec.width = 16;
    spec.square = 4;
    spec.start_x = 2;
    spec.start_y = 5;
    spec.vel_x = 0.5;
    SynthDataset ds = make_synth(spec);
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 7);

    TrainPlan plan;
    plan.stage = TrainStage::Disentangle;
    plan.steps = 6;
    plan.learning_rate = 1e-3;
    plan.seed = 23;
    plan.clip_split = ClipSplit{4, 1};
    plan.lora.init_seed = 2;

    TwoStageInputs inputs;
    inputs.video = ds.video;
    inputs.edit_region = &ds.region;
    inputs.caption = "sq";
    TwoStageResult r = run_two_stage(den, inputs, plan, std::nullopt, codec);
    // (13-4)/(4-1)+1 = 4 clips; sampling must touch more than one of them.
    int max_sample = 0;
    for (const auto& rec : r.trace) max_sample = std::max(max_sample, rec.sample_index);
    CHECK(max_sample >= 1);
    CHECK(max_sample <= 3);
}

TEST_CASE("trace file format") {
    test_util::TempDir dir("trace_fmt");
    std::vector<TraceRecord> recs = {{1, TrainStage::Disentangle, 0, 42, 0.5},
                                     {2, TrainStage::Appearance, 1, 7, 0.25}};
    const std::string path = dir.sub("trace.txt");
    write_trace(path, recs, {"stage_end stage=disentangle adapter_fp=00ff"});
    std::ifstream in(path);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    CHECK(l1 == "step=1 stage=disentangle sample=0 t=42 loss=5.000000000e-01");
    CHECK(l2 == "step=2 stage=appearance sample=1 t=7 loss=2.500000000e-01");
    CHECK(l3 == "# stage_end stage=disentangle adapter_fp=00ff");
}
