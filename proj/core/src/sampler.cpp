#include "editprop/sampler.hpp"

#include "editprop/conditioning.hpp"
#include "editprop/log.hpp"
#include "editprop/rng.hpp"

#include <cmath>

namespace editprop {

std::vector<int> sampler_timesteps(const NoiseSchedule& schedule, int num_steps) {
    if (num_steps < 1) throw ConfigError("num_steps must be >= 1");
    std::vector<int> ts;
    if (schedule.mode == ScheduleMode::EpsilonPrediction) {
        const int t_max = schedule.max_step();
        if (num_steps == 1) {
            ts.push_back(t_max);
        } else {
            for (int i = 0; i < num_steps; ++i) {
                const int t = int(std::llround(double(t_max) * double(num_steps - 1 - i) /
                                               double(num_steps - 1)));
                if (ts.empty() || t < ts.back()) ts.push_back(t);
            }
        }
        ts.push_back(-1);
    } else {
        for (int i = 0; i <= num_steps; ++i) {
            const int t = int(std::llround(double(schedule.num_train_steps) *
                                           double(num_steps - i) / double(num_steps)));
            if (ts.empty() || t < ts.back()) ts.push_back(t);
        }
        if (ts.back() != 0) ts.push_back(0);
        // Every evaluated step needs sigma > 0.
        if (ts.size() >= 2 && ts[ts.size() - 2] < 1) ts[ts.size() - 2] = 1;
    }
    return ts;
}

Array4<float> sample_step(const NoiseSchedule& schedule, const Array4<float>& x_t, int t,
                          int t_next, const Array4<float>& prediction) {
    if (t_next >= t) {
        throw ShapeError("sample_step requires t_next < t, got " + std::to_string(t) + " -> " +
                         std::to_string(t_next));
    }
    require_same_shape(x_t, prediction, "sample_step");
    Array4<float> out(x_t.c, x_t.t, x_t.h, x_t.w);
    if (schedule.mode == ScheduleMode::EpsilonPrediction) {
        schedule.check_step(t);
        const double ab_t = schedule.alpha_bar[std::size_t(t)];
        const double ab_n = t_next < 0 ? 1.0 : schedule.alpha_bar[std::size_t(t_next)];
        const float c_x0 = float(std::sqrt(ab_n / ab_t));
        // x_next = sqrt(ab_n)*x0_hat + sqrt(1-ab_n)*eps_hat, with
        // x0_hat = (x_t - sqrt(1-ab_t)*eps_hat) / sqrt(ab_t).
        const float c_eps = float(std::sqrt(1.0 - ab_n) -
                                  std::sqrt(ab_n / ab_t) * std::sqrt(1.0 - ab_t));
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = c_x0 * x_t.data[i] + c_eps * prediction.data[i];
        }
    } else {
        if (t < 1 || t > schedule.num_train_steps || t_next < 0) {
            throw ShapeError("rectified-flow step out of range");
        }
        const float dsigma = float(schedule.sigma(t_next) - schedule.sigma(t));
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = x_t.data[i] + dsigma * prediction.data[i];
        }
    }
    return out;
}

Array4<float> run_sampler(const NoiseSchedule& schedule, const Predictor& predict,
                          Array4<float> x_init, int num_steps) {
    const auto ts = sampler_timesteps(schedule, num_steps);
    Array4<float> x = std::move(x_init);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        Array4<float> pred = predict(x, ts[i]);
        x = sample_step(schedule, x, ts[i], ts[i + 1], pred);
    }
    return x;
}

VideoTensor propagate(ToyDenoiser<float>& denoiser, const LoraAdapter<float>& adapter,
                      const VideoTensor& video, const VideoTensor& edited_first,
                      const PixelMask* edit_region, CaptionProvider& captioner,
                      const SampleSpec& spec, const ToyCodec& codec) {
    validate(video);
    validate(edited_first);
    spec.validate();
    if (adapter.all_deltas_zero()) {
        log_warn("adapter is untrained (all deltas zero); output will come from the base model");
    }
    if (spec.schedule_mode != denoiser.schedule().mode) {
        log_warn("sampling schedule mode does not match the schedule the adapter was trained with");
    }
    for (const auto& l : adapter.layers) {
        if (fingerprint(denoiser.params().require(l.path + ".weight")) != l.base_fingerprint) {
            throw ConfigError("adapter fingerprint mismatch at " + l.path +
                              ": adapter was trained against different base weights");
        }
    }

    const int t_frames = video.data.t, h = video.data.h, w = video.data.w;
    PixelMask mask = edit_region
                         ? make_mask(MaskConfigKind::Disentangle, t_frames, h, w, edit_region)
                         : make_mask(MaskConfigKind::DefaultI2V, t_frames, h, w);
    VideoTensor cond_video = substitute_first_frame(build_condition_video(video, mask), edited_first);

    ToyTokenizer tokenizer;
    const std::string edited_caption = caption(captioner, edited_first);
    ConditioningBundle<float> bundle = assemble_bundle_pre_masked<float>(
        cond_video, mask, compose_prompt(tokenizer, edited_caption).ids, codec);

    const LoraAdapter<float>* prev = denoiser.attached();
    denoiser.attach(&adapter);

    // Conditioning is the only channel into the sampler from here on.
    Array4<float> x(bundle.cond_latent.c, bundle.cond_latent.t, bundle.cond_latent.h,
                    bundle.cond_latent.w);
    Rng rng(mix_seed(spec.seed, 0x73616d70));
    for (auto& v : x.data) v = float(rng.normal());

    ConditioningBundle<float> uncond;
    if (spec.guidance_scale != 1.0) {
        uncond.cond_latent = Array4<float>(x.c, x.t, x.h, x.w, 0.0f);
        uncond.mask = LatentMask(x.t, x.h, x.w, 0);
        uncond.prompt_tokens = {tokenizer.special_token()};
    }

    Predictor predict = [&](const Array4<float>& x_t, int t) {
        Array4<float> cond_pred = denoiser.predict(x_t, t, bundle);
        if (spec.guidance_scale == 1.0) return cond_pred;
        Array4<float> uncond_pred = denoiser.predict(x_t, t, uncond);
        const float g = float(spec.guidance_scale);
        for (std::size_t i = 0; i < cond_pred.data.size(); ++i) {
            cond_pred.data[i] = uncond_pred.data[i] + g * (cond_pred.data[i] - uncond_pred.data[i]);
        }
        return cond_pred;
    };

    Array4<float> x0 = run_sampler(denoiser.schedule(), predict, std::move(x), spec.num_steps);
    denoiser.attach(prev);

    // The first latent frame is known from the conditioning; take it rather
    // than the sampled estimate so the edit survives exactly up to codec
    // round trip.
    for (int ci = 0; ci < x0.c; ++ci)
        for (int yi = 0; yi < x0.h; ++yi)
            for (int xi = 0; xi < x0.w; ++xi)
                x0.at(ci, 0, yi, xi) = bundle.cond_latent.at(ci, 0, yi, xi);

    VideoTensor out = codec.decode(x0);
    out.fps = video.fps;
    return out;
}

} // namespace editprop
