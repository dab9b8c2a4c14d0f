#pragma once

#include "editprop/codec.hpp"
#include "editprop/conditioning.hpp"
#include "editprop/denoiser.hpp"
#include "editprop/media.hpp"
#include "editprop/schedule.hpp"

#include <optional>
#include <string>
#include <vector>

namespace editprop {

enum class TrainStage { Naive, Disentangle, Appearance };

const char* to_string(TrainStage s);
TrainStage train_stage_from_string(const std::string& name);

// One supervised example: reconstruct `target` given the masked condition.
struct TrainSample {
    VideoTensor target;
    VideoTensor cond_video;
    PixelMask mask;
    std::string caption;
};

struct ClipSplit {
    int clip_len = 0;
    int overlap = 1;
};

struct TrainPlan {
    TrainStage stage = TrainStage::Disentangle;
    int steps = 100;
    double learning_rate = 1e-4;
    uint64_t seed = 0;
    std::optional<ClipSplit> clip_split;
    LoraConfig lora;
    ScheduleMode schedule_mode = ScheduleMode::EpsilonPrediction;

    void validate() const;
};

struct TraceRecord {
    int step = 0;
    TrainStage stage = TrainStage::Naive;
    int sample_index = 0;
    int t = 0;
    double loss = 0.0;
};

void write_trace(const std::string& path, const std::vector<TraceRecord>& trace,
                 const std::vector<std::string>& footer_notes = {});

struct AppearancePair {
    VideoTensor pre_frame;    // T=1
    VideoTensor edited_frame; // T=1
    PixelMask region;         // 1×H×W, nonempty
};

// Full-video reconstruction conditioned on the first frame only.
std::vector<TrainSample> make_naive_samples(const VideoTensor& video, const std::string& caption);

// Background locked outside the edit footprint, edit regenerated.
std::vector<TrainSample> make_disentangle_samples(const VideoTensor& video,
                                                  const PixelMask& edit_region,
                                                  const std::string& caption);

// One single-frame sample per edited frame; no temporal concatenation.
std::vector<TrainSample> make_appearance_samples(const std::vector<AppearancePair>& pairs,
                                                 const std::string& caption);

// Equal-length overlapping clips covering 1..T. Requires
// (T - clip_len) divisible by (clip_len - overlap).
std::vector<VideoTensor> split_clips(const VideoTensor& video, int clip_len, int overlap);

// Frame range [start, start+len) of a mask; single-frame masks pass through.
PixelMask slice_mask(const PixelMask& m, int start, int len);

// Inverse of split_clips: overlap frames deduplicated.
VideoTensor concat_clips(const std::vector<VideoTensor>& clips, int overlap);

struct TrainResult {
    std::vector<TraceRecord> trace;
    uint64_t final_state_fingerprint = 0;
};

// One optimizer step per iteration: uniform sample choice, uniform timestep,
// fresh Gaussian noise, MSE on the schedule-appropriate prediction target,
// Adam on the adapter parameters only. Fully determined by plan.seed.
TrainResult train(ToyDenoiser<float>& denoiser, LoraAdapter<float>& adapter,
                  const std::vector<TrainSample>& samples, const TrainPlan& plan,
                  const ToyCodec& codec);

struct TwoStageInputs {
    VideoTensor video;
    const PixelMask* edit_region = nullptr;
    std::vector<AppearancePair> appearance_pairs;
    std::string caption;
};

struct TwoStageResult {
    LoraAdapter<float> adapter;
    std::vector<TraceRecord> trace;
    uint64_t stage1_fingerprint = 0;
    uint64_t stage2_fingerprint = 0;
};

// Stage 1 trains on the video (naive or disentangle per plan1.stage);
// stage 2, when present, continues the same adapter on appearance samples.
TwoStageResult run_two_stage(ToyDenoiser<float>& denoiser, const TwoStageInputs& inputs,
                             const TrainPlan& plan1, const std::optional<TrainPlan>& plan2,
                             const ToyCodec& codec);

// --- step-level helpers shared with the gradient tests ---

template <typename S>
struct StepContext {
    Array4<S> x_t;
    int t = 0;
    ConditioningBundle<S> cond;
    Array4<S> target;
};

template <typename S>
S step_loss_value(const ToyDenoiser<S>& denoiser, const StepContext<S>& ctx) {
    ad::Graph<S> g;
    auto taped = denoiser.build_loss(g, ctx.x_t, ctx.t, ctx.cond, ctx.target);
    return taped.loss->val(0, 0);
}

template <typename S>
struct LoraGrads {
    std::vector<Mat<S>> a; // aligned with adapter.layers
    std::vector<Mat<S>> b;
};

template <typename S>
std::pair<S, LoraGrads<S>> step_loss_and_grads(const ToyDenoiser<S>& denoiser,
                                               const StepContext<S>& ctx) {
    const LoraAdapter<S>* adapter = denoiser.attached();
    if (!adapter) throw ConfigError("no adapter attached");
    ad::Graph<S> g;
    auto taped = denoiser.build_loss(g, ctx.x_t, ctx.t, ctx.cond, ctx.target);
    g.backward(taped.loss);
    LoraGrads<S> grads;
    grads.a.resize(adapter->layers.size());
    grads.b.resize(adapter->layers.size());
    for (std::size_t i = 0; i < adapter->layers.size(); ++i) {
        grads.a[i] = Mat<S>::Zero(adapter->layers[i].A.rows(), adapter->layers[i].A.cols());
        grads.b[i] = Mat<S>::Zero(adapter->layers[i].B.rows(), adapter->layers[i].B.cols());
    }
    for (const auto& ref : taped.lora_nodes) {
        if (ref.a->has_grad) grads.a[ref.layer_index] += ref.a->grad;
        if (ref.b->has_grad) grads.b[ref.layer_index] += ref.b->grad;
    }
    return {taped.loss->val(0, 0), std::move(grads)};
}

} // namespace editprop
