#include "editprop/training.hpp"

#include "editprop/log.hpp"
#include "editprop/rng.hpp"
#include "editprop/tokenizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace editprop {

const char* to_string(TrainStage s) {
    switch (s) {
        case TrainStage::Naive: return "naive";
        case TrainStage::Disentangle: return "disentangle";
        case TrainStage::Appearance: return "appearance";
    }
    return "?";
}

TrainStage train_stage_from_string(const std::string& name) {
    if (name == "naive") return TrainStage::Naive;
    if (name == "disentangle") return TrainStage::Disentangle;
    if (name == "appearance") return TrainStage::Appearance;
    throw ConfigError("unknown train stage: " + name);
}

void TrainPlan::validate() const {
    if (steps < 1) throw ConfigError("plan.steps must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("plan.learning_rate must be >= 0");
    if (clip_split) {
        if (stage == TrainStage::Appearance) {
            throw ConfigError("clip_split only applies to video stages");
        }
        if (clip_split->clip_len < 1 || clip_split->overlap < 0 ||
            clip_split->clip_len <= clip_split->overlap) {
            throw ConfigError("clip_split requires clip_len > overlap >= 0");
        }
    }
    lora.validate();
}

void write_trace(const std::string& path, const std::vector<TraceRecord>& trace,
                 const std::vector<std::string>& footer_notes) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write trace: " + path);
    char line[160];
    for (const auto& r : trace) {
        std::snprintf(line, sizeof(line), "step=%d stage=%s sample=%d t=%d loss=%.9e\n", r.step,
                      to_string(r.stage), r.sample_index, r.t, r.loss);
        out << line;
    }
    for (const auto& note : footer_notes) out << "# " << note << "\n";
    if (!out) throw IoError("trace write failed: " + path);
}

std::vector<TrainSample> make_naive_samples(const VideoTensor& video, const std::string& caption) {
    validate(video);
    if (video.data.t < 2) throw ShapeError("naive propagation needs at least 2 frames");
    PixelMask mask = make_mask(MaskConfigKind::DefaultI2V, video.data.t, video.data.h, video.data.w);
    TrainSample s;
    s.cond_video = build_condition_video(video, mask);
    s.mask = std::move(mask);
    s.target = video;
    s.caption = caption;
    return {std::move(s)};
}

std::vector<TrainSample> make_disentangle_samples(const VideoTensor& video,
                                                  const PixelMask& edit_region,
                                                  const std::string& caption) {
    validate(video);
    PixelMask mask = make_mask(MaskConfigKind::Disentangle, video.data.t, video.data.h,
                               video.data.w, &edit_region);
    TrainSample s;
    s.cond_video = build_condition_video(video, mask);
    s.mask = std::move(mask);
    s.target = video;
    s.caption = caption;
    return {std::move(s)};
}

std::vector<TrainSample> make_appearance_samples(const std::vector<AppearancePair>& pairs,
                                                 const std::string& caption) {
    if (pairs.empty()) throw ShapeError("appearance stage needs at least one edited frame");
    std::vector<TrainSample> samples;
    samples.reserve(pairs.size());
    for (const auto& p : pairs) {
        validate(p.pre_frame);
        validate(p.edited_frame);
        if (p.pre_frame.data.t != 1 || p.edited_frame.data.t != 1) {
            throw ShapeError("appearance pairs must be single frames");
        }
        if (p.pre_frame.data.h != p.edited_frame.data.h ||
            p.pre_frame.data.w != p.edited_frame.data.w) {
            throw ShapeError("appearance pair frames disagree on size");
        }
        if (p.region.count_ones() == 0) {
            throw ShapeError("appearance pair has an empty edit region");
        }
        PixelMask mask = make_mask(MaskConfigKind::Appearance, 1, p.pre_frame.data.h,
                                   p.pre_frame.data.w, &p.region);
        TrainSample s;
        s.cond_video = build_condition_video(p.pre_frame, mask);
        s.mask = std::move(mask);
        s.target = p.edited_frame;
        s.caption = caption;
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<VideoTensor> split_clips(const VideoTensor& video, int clip_len, int overlap) {
    const int t = video.data.t;
    if (clip_len <= overlap || overlap < 0) {
        throw ShapeError("split_clips requires clip_len > overlap >= 0");
    }
    if (clip_len > t) throw ShapeError("clip_len exceeds frame count");
    const int stride = clip_len - overlap;
    if ((t - clip_len) % stride != 0) {
        throw ShapeError("clip layout does not tile: (T - clip_len) must divide by (clip_len - overlap)");
    }
    const int n_clips = (t - clip_len) / stride + 1;
    std::vector<VideoTensor> clips;
    clips.reserve(std::size_t(n_clips));
    for (int k = 0; k < n_clips; ++k) {
        const int start = k * stride;
        VideoTensor clip = make_video(clip_len, video.data.h, video.data.w);
        clip.fps = video.fps;
        for (int ci = 0; ci < 3; ++ci)
            for (int ti = 0; ti < clip_len; ++ti)
                for (int yi = 0; yi < video.data.h; ++yi)
                    for (int xi = 0; xi < video.data.w; ++xi)
                        clip.data.at(ci, ti, yi, xi) = video.data.at(ci, start + ti, yi, xi);
        clips.push_back(std::move(clip));
    }
    return clips;
}

PixelMask slice_mask(const PixelMask& m, int start, int len) {
    if (m.t == 1) return m;
    if (start < 0 || start + len > m.t) throw ShapeError("mask slice out of range");
    PixelMask out(len, m.h, m.w);
    for (int ti = 0; ti < len; ++ti)
        for (int yi = 0; yi < m.h; ++yi)
            for (int xi = 0; xi < m.w; ++xi) out.at(ti, yi, xi) = m.at(start + ti, yi, xi);
    return out;
}

VideoTensor concat_clips(const std::vector<VideoTensor>& clips, int overlap) {
    if (clips.empty()) throw ShapeError("no clips to concatenate");
    int total = clips[0].data.t;
    for (std::size_t k = 1; k < clips.size(); ++k) total += clips[k].data.t - overlap;
    VideoTensor out = make_video(total, clips[0].data.h, clips[0].data.w);
    out.fps = clips[0].fps;
    int cursor = 0;
    for (std::size_t k = 0; k < clips.size(); ++k) {
        const VideoTensor& clip = clips[k];
        const int from = k == 0 ? 0 : overlap;
        for (int ci = 0; ci < 3; ++ci)
            for (int ti = from; ti < clip.data.t; ++ti)
                for (int yi = 0; yi < clip.data.h; ++yi)
                    for (int xi = 0; xi < clip.data.w; ++xi)
                        out.data.at(ci, cursor + ti - from, yi, xi) = clip.data.at(ci, ti, yi, xi);
        cursor += clip.data.t - from;
    }
    return out;
}

namespace {

// Adam with bias correction; moments per adapter tensor.
class Adam {
public:
    Adam(const LoraAdapter<float>& adapter, double lr)
        : lr_(lr) {
        for (const auto& l : adapter.layers) {
            m_.emplace_back(Mat<float>::Zero(l.A.rows(), l.A.cols()),
                            Mat<float>::Zero(l.B.rows(), l.B.cols()));
            v_.emplace_back(Mat<float>::Zero(l.A.rows(), l.A.cols()),
                            Mat<float>::Zero(l.B.rows(), l.B.cols()));
        }
    }

    void step(LoraAdapter<float>& adapter, const LoraGrads<float>& grads) {
        ++k_;
        const double bc1 = 1.0 - std::pow(kBeta1, k_);
        const double bc2 = 1.0 - std::pow(kBeta2, k_);
        for (std::size_t i = 0; i < adapter.layers.size(); ++i) {
            update(adapter.layers[i].A, grads.a[i], m_[i].first, v_[i].first, bc1, bc2);
            update(adapter.layers[i].B, grads.b[i], m_[i].second, v_[i].second, bc1, bc2);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    void update(Mat<float>& p, const Mat<float>& g, Mat<float>& m, Mat<float>& v, double bc1,
                double bc2) {
        m = float(kBeta1) * m + float(1.0 - kBeta1) * g;
        v = float(kBeta2) * v + float(1.0 - kBeta2) * g.cwiseProduct(g);
        Mat<float> denom = (v / float(bc2)).cwiseSqrt();
        denom.array() += float(kEps);
        p -= float(lr_ / bc1) * m.cwiseQuotient(denom);
    }

    double lr_;
    int k_ = 0;
    std::vector<std::pair<Mat<float>, Mat<float>>> m_, v_;
};

} // namespace

TrainResult train(ToyDenoiser<float>& denoiser, LoraAdapter<float>& adapter,
                  const std::vector<TrainSample>& samples, const TrainPlan& plan,
                  const ToyCodec& codec) {
    plan.validate();
    if (samples.empty()) throw ConfigError("no training samples");
    if (denoiser.attached() != &adapter) {
        throw ConfigError("adapter must be attached to the denoiser before training");
    }
    if (plan.schedule_mode != denoiser.schedule().mode) {
        throw ConfigError("plan schedule mode does not match the denoiser schedule");
    }

    const NoiseSchedule& sch = denoiser.schedule();
    ToyTokenizer tokenizer;

    // Per-sample constants: encoded target and the condition bundle.
    std::vector<StepContext<float>> contexts(samples.size());
    std::vector<Array4<float>> x0s(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const TrainSample& s = samples[i];
        x0s[i] = codec.encode<float>(s.target);
        contexts[i].cond = assemble_bundle_pre_masked<float>(
            s.cond_video, s.mask, compose_prompt(tokenizer, s.caption).ids, codec);
    }

    Adam adam(adapter, plan.learning_rate);
    Rng rng(mix_seed(plan.seed, 0x747261696e));
    TrainResult result;
    result.trace.reserve(std::size_t(plan.steps));

    for (int step = 1; step <= plan.steps; ++step) {
        const int si = rng.uniform_int(0, int(samples.size()) - 1);
        const int t = rng.uniform_int(sch.min_step(), sch.max_step());
        const Array4<float>& x0 = x0s[std::size_t(si)];
        Array4<float> eps(x0.c, x0.t, x0.h, x0.w);
        for (auto& e : eps.data) e = float(rng.normal());

        StepContext<float>& ctx = contexts[std::size_t(si)];
        ctx.t = t;
        ctx.x_t = add_noise(sch, x0, eps, t);
        ctx.target = prediction_target(sch, x0, eps);

        auto [loss, grads] = step_loss_and_grads(denoiser, ctx);
        if (!std::isfinite(loss)) throw NanLossError(step, si, t);
        adam.step(adapter, grads);
        result.trace.push_back({step, plan.stage, si, t, double(loss)});
    }
    result.final_state_fingerprint = adapter.state_fingerprint();
    return result;
}

TwoStageResult run_two_stage(ToyDenoiser<float>& denoiser, const TwoStageInputs& inputs,
                             const TrainPlan& plan1, const std::optional<TrainPlan>& plan2,
                             const ToyCodec& codec) {
    plan1.validate();
    if (plan1.stage == TrainStage::Appearance) {
        throw ConfigError("stage 1 must train on the video (naive or disentangle)");
    }
    if (plan2) {
        plan2->validate();
        if (plan2->stage != TrainStage::Appearance) {
            throw ConfigError("stage 2 is the appearance stage");
        }
        if (inputs.appearance_pairs.empty()) {
            throw ConfigError("stage 2 requires appearance pairs");
        }
    }
    if (plan1.stage == TrainStage::Disentangle && inputs.edit_region == nullptr) {
        throw ConfigError("disentangle stage requires an edit region");
    }

    std::vector<TrainSample> samples1;
    if (plan1.clip_split) {
        const auto clips = split_clips(inputs.video, plan1.clip_split->clip_len,
                                       plan1.clip_split->overlap);
        const int stride = plan1.clip_split->clip_len - plan1.clip_split->overlap;
        for (std::size_t k = 0; k < clips.size(); ++k) {
            if (plan1.stage == TrainStage::Naive) {
                auto s = make_naive_samples(clips[k], inputs.caption);
                samples1.insert(samples1.end(), s.begin(), s.end());
            } else {
                PixelMask sub = slice_mask(*inputs.edit_region, int(k) * stride,
                                           plan1.clip_split->clip_len);
                auto s = make_disentangle_samples(clips[k], sub, inputs.caption);
                samples1.insert(samples1.end(), s.begin(), s.end());
            }
        }
    } else if (plan1.stage == TrainStage::Naive) {
        samples1 = make_naive_samples(inputs.video, inputs.caption);
    } else {
        samples1 = make_disentangle_samples(inputs.video, *inputs.edit_region, inputs.caption);
    }

    TwoStageResult out;
    out.adapter = inject(denoiser, plan1.lora);
    denoiser.attach(&out.adapter);
    TrainResult r1 = train(denoiser, out.adapter, samples1, plan1, codec);
    out.trace = std::move(r1.trace);
    out.stage1_fingerprint = r1.final_state_fingerprint;

    if (plan2) {
        auto samples2 = make_appearance_samples(inputs.appearance_pairs, inputs.caption);
        TrainResult r2 = train(denoiser, out.adapter, samples2, *plan2, codec);
        for (auto& rec : r2.trace) rec.step += plan1.steps;
        out.trace.insert(out.trace.end(), r2.trace.begin(), r2.trace.end());
        out.stage2_fingerprint = r2.final_state_fingerprint;
    }
    denoiser.attach(nullptr);
    return out;
}

} // namespace editprop
