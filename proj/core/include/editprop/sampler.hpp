#pragma once

#include "editprop/codec.hpp"
#include "editprop/denoiser.hpp"
#include "editprop/media.hpp"
#include "editprop/schedule.hpp"
#include "editprop/tokenizer.hpp"

#include <functional>
#include <vector>

namespace editprop {

struct SampleSpec {
    int num_steps = 30;
    double guidance_scale = 1.0;
    uint64_t seed = 0;
    ScheduleMode schedule_mode = ScheduleMode::EpsilonPrediction;

    void validate() const {
        if (num_steps < 1) throw ConfigError("sample.num_steps must be >= 1");
        if (guidance_scale < 1.0) throw ConfigError("sample.guidance must be >= 1");
    }
};

// Descending timestep grid. EpsilonPrediction ends with the sentinel -1
// (fully denoised); RectifiedFlow ends at 0 (sigma = 0).
std::vector<int> sampler_timesteps(const NoiseSchedule& schedule, int num_steps);

// One deterministic update from t to t_next given the model prediction at t.
// EpsilonPrediction follows the DDIM eta=0 rule; RectifiedFlow takes an
// Euler step on the predicted velocity.
Array4<float> sample_step(const NoiseSchedule& schedule, const Array4<float>& x_t, int t,
                          int t_next, const Array4<float>& prediction);

using Predictor = std::function<Array4<float>(const Array4<float>& x_t, int t)>;

// Runs the full grid starting from x_init at the noisiest step.
Array4<float> run_sampler(const NoiseSchedule& schedule, const Predictor& predict,
                          Array4<float> x_init, int num_steps);

// First-frame-guided inference: builds the conditioning (Disentangle when an
// edit region is given, DefaultI2V otherwise), swaps in the edited first
// frame, captions it, samples from Gaussian noise, and decodes. The first
// latent frame is taken from the conditioning before decoding, so the output
// first frame reproduces the edit up to codec round trip.
VideoTensor propagate(ToyDenoiser<float>& denoiser, const LoraAdapter<float>& adapter,
                      const VideoTensor& video, const VideoTensor& edited_first,
                      const PixelMask* edit_region, CaptionProvider& captioner,
                      const SampleSpec& spec, const ToyCodec& codec);

} // namespace editprop
