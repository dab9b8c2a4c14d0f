#include "editprop/sampler.hpp"

#include "editprop/denoiser.hpp"
#include "editprop/log.hpp"
#include "editprop/training.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace editprop;

namespace {

Array4<float> random_latent(int c, int t, int h, int w, uint64_t seed) {
    Array4<float> x(c, t, h, w);
    Rng rng(seed);
    for (auto& v : x.data) v = float(rng.normal());
    return x;
}

// Analytic predictors for a known clean latent.
Predictor epsilon_oracle(const NoiseSchedule& sch, const Array4<float>& x0) {
    return [&sch, x0](const Array4<float>& x_t, int t) {
        const double ab = sch.alpha_bar[std::size_t(t)];
        Array4<float> eps(x_t.c, x_t.t, x_t.h, x_t.w);
        const double denom = std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < x_t.data.size(); ++i) {
            eps.data[i] = float((x_t.data[i] - std::sqrt(ab) * x0.data[i]) / denom);
        }
        return eps;
    };
}

Predictor velocity_oracle(const NoiseSchedule& sch, const Array4<float>& x0) {
    return [&sch, x0](const Array4<float>& x_t, int t) {
        const double sigma = sch.sigma(t);
        Array4<float> v(x_t.c, x_t.t, x_t.h, x_t.w);
        for (std::size_t i = 0; i < x_t.data.size(); ++i) {
            v.data[i] = float((x_t.data[i] - x0.data[i]) / sigma);
        }
        return v;
    };
}

float max_abs_diff(const Array4<float>& a, const Array4<float>& b) {
    float m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

} // namespace

TEST_CASE("single DDIM step from t_max with the oracle recovers x0 exactly") {
    NoiseSchedule sch = NoiseSchedule::make_epsilon(1000);
    Array4<float> x0 = random_latent(4, 2, 3, 3, 1);
    Array4<float> eps = random_latent(4, 2, 3, 3, 2);
    const int t_max = sch.max_step();
    Array4<float> x_t = add_noise(sch, x0, eps, t_max);
    Array4<float> rec = sample_step(sch, x_t, t_max, -1, epsilon_oracle(sch, x0)(x_t, t_max));
    CHECK(max_abs_diff(rec, x0) <= 2e-4f);
}

TEST_CASE("sampler grid is strictly decreasing and hits the endpoints") {
    NoiseSchedule eps = NoiseSchedule::make_epsilon(1000);
    auto ts = sampler_timesteps(eps, 30);
    CHECK(ts.front() == 999);
    CHECK(ts.back() == -1);
    CHECK(ts[ts.size() - 2] == 0);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);

    NoiseSchedule rf = NoiseSchedule::make_rectified_flow(1000);
    auto rts = sampler_timesteps(rf, 30);
    CHECK(rts.front() == 1000);
    CHECK(rts.back() == 0);
    for (std::size_t i = 1; i < rts.size(); ++i) CHECK(rts[i] < rts[i - 1]);
}

TEST_CASE("oracle sampler recovers x0: epsilon within 1e-3, rectified flow within 1e-4") {
    Array4<float> x0 = random_latent(4, 2, 4, 4, 3);

    NoiseSchedule eps_sch = NoiseSchedule::make_epsilon(1000);
    Array4<float> noise = random_latent(4, 2, 4, 4, 4);
    Array4<float> rec = run_sampler(eps_sch, epsilon_oracle(eps_sch, x0), noise, 10);
    CHECK(max_abs_diff(rec, x0) <= 1e-3f);

    NoiseSchedule rf_sch = NoiseSchedule::make_rectified_flow(1000);
    Array4<float> rec_rf = run_sampler(rf_sch, velocity_oracle(rf_sch, x0), noise, 30);
    CHECK(max_abs_diff(rec_rf, x0) <= 1e-4f);
}

TEST_CASE("constant-velocity field integrates along the straight line") {
    // With velocity eps - x0 everywhere, Euler from eps lands on x0 for any
    // step count; check against the closed-form line at each grid point.
    NoiseSchedule rf = NoiseSchedule::make_rectified_flow(100);
    Array4<float> x0 = random_latent(2, 1, 2, 2, 5);
    Array4<float> eps = random_latent(2, 1, 2, 2, 6);
    Array4<float> vel(2, 1, 2, 2);
    for (std::size_t i = 0; i < vel.data.size(); ++i) {
        vel.data[i] = eps.data[i] - x0.data[i];
    }
    Array4<float> x = eps;
    auto ts = sampler_timesteps(rf, 7);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        x = sample_step(rf, x, ts[i], ts[i + 1], vel);
        const double sigma = rf.sigma(ts[i + 1]);
        for (std::size_t j = 0; j < x.data.size(); ++j) {
            const double line = (1.0 - sigma) * x0.data[j] + sigma * eps.data[j];
            CHECK(x.data[j] == doctest::Approx(line).epsilon(1e-4));
        }
    }
    CHECK(max_abs_diff(x, x0) <= 1e-4f);
}

TEST_CASE("sample_step rejects non-decreasing timesteps") {
    NoiseSchedule sch = NoiseSchedule::make_epsilon(100);
    Array4<float> x = random_latent(1, 1, 2, 2, 7);
    CHECK_THROWS_AS(sample_step(sch, x, 50, 50, x), ShapeError);
    CHECK_THROWS_AS(sample_step(sch, x, 50, 80, x), ShapeError);
}

TEST_CASE("propagate: determinism, shape, regions, and warnings") {
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 11);
    LoraConfig lc;
    lc.init_seed = 1;
    LoraAdapter<float> adapter = inject(den, lc);

    VideoTensor video = test_util::random_video(4, 8, 8, 31);
    VideoTensor edited = test_util::random_video(1, 8, 8, 32);
    PixelMask region = test_util::random_mask(4, 8, 8, 33, 0.2);
    StubCaptionProvider cap("an edited scene");
    SampleSpec spec;
    spec.num_steps = 6;
    spec.seed = 5;

    int warnings = 0;
    set_log_handler([&](LogLevel level, const std::string&) {
        if (level == LogLevel::Warn) ++warnings;
    });
    VideoTensor a = propagate(den, adapter, video, edited, &region, cap, spec, codec);
    set_log_handler(nullptr);
    CHECK(warnings >= 1); // untrained adapter warning, not fatal

    VideoTensor b = propagate(den, adapter, video, edited, &region, cap, spec, codec);
    CHECK(a.data.data == b.data.data);
    CHECK(a.data.t == video.data.t);
    CHECK(a.data.h == video.data.h);
    CHECK(a.data.w == video.data.w);

    // Different seed, different output.
    SampleSpec spec2 = spec;
    spec2.seed = 6;
    VideoTensor c = propagate(den, adapter, video, edited, &region, cap, spec2, codec);
    CHECK(a.data.data != c.data.data);

    // Frame 1 carries the edit exactly (patchify codec has no loss).
    VideoTensor no_region = propagate(den, adapter, video, edited, nullptr, cap, spec, codec);
    for (int ci = 0; ci < 3; ++ci)
        for (int yi = 0; yi < 8; ++yi)
            for (int xi = 0; xi < 8; ++xi) {
                CHECK(no_region.data.at(ci, 0, yi, xi) ==
                      doctest::Approx(edited.data.at(ci, 0, yi, xi)).epsilon(1e-6));
            }

    VideoTensor bad = test_util::random_video(1, 6, 8, 34);
    CHECK_THROWS_AS(propagate(den, adapter, video, bad, nullptr, cap, spec, codec), ShapeError);
}

TEST_CASE("propagate rejects adapters from a different base model") {
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_epsilon(1000), 11);
    ToyDenoiser<float> other({}, NoiseSchedule::make_epsilon(1000), 12);
    LoraConfig lc;
    LoraAdapter<float> adapter = inject(other, lc);
    VideoTensor video = test_util::random_video(2, 8, 8, 31);
    VideoTensor edited = test_util::random_video(1, 8, 8, 32);
    StubCaptionProvider cap("x");
    SampleSpec spec;
    spec.num_steps = 2;
    CHECK_THROWS_WITH_AS(propagate(den, adapter, video, edited, nullptr, cap, spec, codec),
                         doctest::Contains("fingerprint"), ConfigError);
}

TEST_CASE("schedule-mode mismatch warns but proceeds") {
    ToyCodec codec;
    ToyDenoiser<float> den({}, NoiseSchedule::make_rectified_flow(1000), 11);
    LoraConfig lc;
    LoraAdapter<float> adapter = inject(den, lc);
    VideoTensor video = test_util::random_video(2, 8, 8, 41);
    VideoTensor edited = test_util::random_video(1, 8, 8, 42);
    StubCaptionProvider cap("x");
    SampleSpec spec;
    spec.num_steps = 4;
    spec.schedule_mode = ScheduleMode::EpsilonPrediction; // adapter side is RF

    bool mode_warning = false;
    set_log_handler([&](LogLevel level, const std::string& msg) {
        if (level == LogLevel::Warn && msg.find("schedule mode") != std::string::npos) {
            mode_warning = true;
        }
    });
    CHECK_NOTHROW(propagate(den, adapter, video, edited, nullptr, cap, spec, codec));
    set_log_handler(nullptr);
    CHECK(mode_warning);
}
