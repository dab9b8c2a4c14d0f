#include "editprop/config.hpp"
#include "editprop/denoiser.hpp"
#include "editprop/log.hpp"
#include "editprop/media.hpp"
#include "editprop/metrics.hpp"
#include "editprop/sampler.hpp"
#include "editprop/synth.hpp"
#include "editprop/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;
using namespace editprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct SizeArg {
    int w = 0, h = 0;
};

SizeArg parse_size(const std::string& s) {
    SizeArg out;
    if (std::sscanf(s.c_str(), "%dx%d", &out.w, &out.h) != 2 || out.w < 1 || out.h < 1) {
        throw ConfigError("expected WxH, got '" + s + "'");
    }
    return out;
}

std::pair<double, double> parse_pair(const std::string& s) {
    double a = 0, b = 0;
    if (std::sscanf(s.c_str(), "%lf,%lf", &a, &b) != 2) {
        throw ConfigError("expected x,y pair, got '" + s + "'");
    }
    return {a, b};
}

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_config_file(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

// The config copy in the output directory is the reproducibility record:
// original file first, CLI overrides appended (later keys win).
void copy_config(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ifstream in(config_path);
    std::ofstream out(fs::path(out_dir) / "config.txt", std::ios::trunc);
    out << in.rdbuf();
    if (!overrides.empty()) {
        out << "\n# command-line overrides\n";
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            out << kv.substr(0, eq) << " = " << kv.substr(eq + 1) << "\n";
        }
    }
}

ToyDenoiser<float> build_denoiser(const ExperimentConfig& cfg, const ToyCodec& codec) {
    DenoiserDims dims;
    dims.latent_channels = codec.spec().latent_channels;
    ToyDenoiser<float> den(dims, cfg.make_schedule(), cfg.resolved_backbone_seed());
    if (!cfg.weights_in.empty()) load_weights(den.params(), cfg.weights_in);
    return den;
}

std::vector<AppearancePair> load_appearance_pairs(const ExperimentConfig& cfg,
                                                  const VideoTensor& video,
                                                  const PixelMask& region) {
    std::vector<AppearancePair> pairs;
    for (int idx : cfg.appearance_frames) {
        if (idx < 1 || idx > video.data.t) {
            throw ConfigError("appearance frame index " + std::to_string(idx) +
                              " outside video with " + std::to_string(video.data.t) + " frames");
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.png", idx);
        const fs::path target = fs::path(cfg.appearance_dir) / name;
        if (!fs::is_regular_file(target)) {
            throw ConfigError("appearance target missing: " + target.string());
        }
        AppearancePair p;
        p.pre_frame = frame_at(video, idx - 1);
        p.edited_frame = load_frame_file(target.string());
        p.region = slice_mask(region, idx - 1, 1);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = load_with_overrides(config_path, overrides);
    validate_for_train(cfg);

    VideoTensor video = load_video(cfg.video_dir);
    TrainPlan plan1 = cfg.make_stage1_plan();
    std::optional<TrainPlan> plan2 = cfg.make_stage2_plan();

    PixelMask region;
    TwoStageInputs inputs;
    inputs.video = video;
    inputs.caption = cfg.caption;
    const bool need_region = plan1.stage == TrainStage::Disentangle || plan2.has_value();
    if (need_region) {
        region = load_mask_sequence(cfg.region_dir, video.data.t, video.data.h, video.data.w);
        inputs.edit_region = &region;
    }
    if (plan2) inputs.appearance_pairs = load_appearance_pairs(cfg, video, region);

    copy_config(config_path, overrides, cfg.out_dir);

    ToyCodec codec;
    ToyDenoiser<float> den = build_denoiser(cfg, codec);
    TwoStageResult result = run_two_stage(den, inputs, plan1, plan2, codec);

    save_adapter(result.adapter, cfg.resolved_adapter_path());
    char note1[96], note2[96];
    std::snprintf(note1, sizeof(note1), "stage_end stage=%s adapter_fp=%016llx",
                  to_string(plan1.stage), (unsigned long long)result.stage1_fingerprint);
    std::vector<std::string> notes = {note1};
    if (plan2) {
        std::snprintf(note2, sizeof(note2), "stage_end stage=appearance adapter_fp=%016llx",
                      (unsigned long long)result.stage2_fingerprint);
        notes.push_back(note2);
    }
    write_trace((fs::path(cfg.out_dir) / "trace.txt").string(), result.trace, notes);
    if (!cfg.weights_out.empty()) save_weights(den.params(), cfg.weights_out);

    std::printf("trained %zu step(s); adapter -> %s\n", result.trace.size(),
                cfg.resolved_adapter_path().c_str());
    return kExitOk;
}

int cmd_propagate(const std::string& config_path, const std::vector<std::string>& overrides,
                  bool run_eval) {
    ExperimentConfig cfg = load_with_overrides(config_path, overrides);
    validate_for_propagate(cfg);

    VideoTensor video = load_video(cfg.video_dir);
    VideoTensor edited_first = load_frame_file(cfg.edited_first_path);
    LoraAdapter<float> adapter = load_adapter(cfg.resolved_adapter_path());

    PixelMask region;
    const PixelMask* region_ptr = nullptr;
    if (!cfg.region_dir.empty()) {
        region = load_mask_sequence(cfg.region_dir, video.data.t, video.data.h, video.data.w);
        region_ptr = &region;
    }

    ToyCodec codec;
    ToyDenoiser<float> den = build_denoiser(cfg, codec);
    StubCaptionProvider captioner(cfg.resolved_caption_edited());
    VideoTensor out = propagate(den, adapter, video, edited_first, region_ptr, captioner,
                                cfg.make_sample_spec(), codec);

    fs::create_directories(cfg.out_dir);
    const std::string frames_dir = (fs::path(cfg.out_dir) / "frames").string();
    save_video(out, frames_dir);
    std::printf("propagated %d frame(s) -> %s\n", out.data.t, frames_dir.c_str());

    if (run_eval || !cfg.eval_input_dir.empty()) {
        const std::string input_dir =
            cfg.eval_input_dir.empty() ? cfg.video_dir : cfg.eval_input_dir;
        VideoTensor input = load_video(input_dir);
        ToyEmbeddingProvider provider;
        std::vector<std::pair<std::string, double>> entries;
        entries.emplace_back("clip_score", clip_score(out, edited_first, provider));
        entries.emplace_back("input_similarity", input_similarity(out, input, provider));
        if (region_ptr) {
            PixelMask preserve =
                make_mask(MaskConfigKind::SelectivePreservation, video.data.t, video.data.h,
                          video.data.w, region_ptr);
            entries.emplace_back("background_mse", background_mse(out, input, preserve));
        }
        const std::string report = (fs::path(cfg.out_dir) / "metrics.txt").string();
        write_metric_report(report, entries);
        for (const auto& [k, v] : entries) std::printf("%s=%.9e\n", k.c_str(), v);
        std::printf("metric report -> %s\n", report.c_str());
    }
    return kExitOk;
}

int cmd_evaluate(const std::string& gen_dir, const std::string& input_dir,
                 const std::string& edited_first_path, const std::string& preserve_dir,
                 const std::string& out_path) {
    VideoTensor gen = load_video(gen_dir);
    VideoTensor input = load_video(input_dir);
    VideoTensor edited_first = load_frame_file(edited_first_path);
    ToyEmbeddingProvider provider;
    std::vector<std::pair<std::string, double>> entries;
    entries.emplace_back("clip_score", clip_score(gen, edited_first, provider));
    entries.emplace_back("input_similarity", input_similarity(gen, input, provider));
    if (!preserve_dir.empty()) {
        PixelMask preserve =
            load_mask_sequence(preserve_dir, gen.data.t, gen.data.h, gen.data.w);
        entries.emplace_back("background_mse", background_mse(gen, input, preserve));
    }
    write_metric_report(out_path, entries);
    for (const auto& [k, v] : entries) std::printf("%s=%.9e\n", k.c_str(), v);
    return kExitOk;
}

int cmd_make_mask(const std::string& kind_name, int frames, const std::string& size_arg,
                  const std::string& region_dir, const std::string& out_dir) {
    const MaskConfigKind kind = mask_kind_from_string(kind_name);
    const SizeArg size = parse_size(size_arg);
    // Everything up to the write is argument validation; surface failures as
    // usage errors.
    PixelMask mask;
    try {
        PixelMask region;
        const PixelMask* region_ptr = nullptr;
        if (!region_dir.empty()) {
            region = load_mask_sequence(region_dir, frames, size.h, size.w);
            region_ptr = &region;
        }
        mask = make_mask(kind, frames, size.h, size.w, region_ptr);
    } catch (const ShapeError& e) {
        throw ConfigError(e.what());
    }
    save_mask_sequence(mask, out_dir);
    std::printf("wrote %d mask frame(s) -> %s\n", mask.t, out_dir.c_str());
    return kExitOk;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir,
              const std::vector<int>& appearance_frames) {
    SynthDataset ds = make_synth(spec);
    save_video(ds.video, (fs::path(out_dir) / "video").string());
    save_mask_sequence(ds.region, (fs::path(out_dir) / "region").string());
    fs::create_directories(fs::path(out_dir) / "edited");
    save_frame_file(ds.edited_first, (fs::path(out_dir) / "edited" / "frame_00001.png").string());
    if (!appearance_frames.empty()) {
        fs::create_directories(fs::path(out_dir) / "appearance");
        for (int idx : appearance_frames) {
            if (idx < 1 || idx > spec.frames) {
                throw ConfigError("appearance frame index out of range: " + std::to_string(idx));
            }
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05d.png", idx);
            save_frame_file(synth_edited_frame(spec, idx - 1),
                            (fs::path(out_dir) / "appearance" / name).string());
        }
    }
    std::printf("synthetic dataset -> %s\n", out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"editprop: mask-guided LoRA edit propagation for toy latent video diffusion"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "Fine-tune a LoRA adapter on one video");
    std::string train_config;
    std::vector<std::string> train_overrides;
    train_cmd->add_option("--config", train_config, "experiment config file")->required();
    train_cmd->add_option("--set", train_overrides, "override config key=value");

    // propagate
    auto* prop_cmd = app.add_subcommand("propagate", "Propagate a first-frame edit");
    std::string prop_config;
    std::vector<std::string> prop_overrides;
    bool prop_eval = false;
    prop_cmd->add_option("--config", prop_config, "experiment config file")->required();
    prop_cmd->add_option("--set", prop_overrides, "override config key=value");
    prop_cmd->add_flag("--eval", prop_eval, "evaluate against the input video");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Metrics for generated frames");
    std::string eval_gen, eval_input, eval_edited, eval_preserve, eval_out = "metrics.txt";
    eval_cmd->add_option("--gen", eval_gen, "generated frame directory")->required();
    eval_cmd->add_option("--input", eval_input, "input frame directory")->required();
    eval_cmd->add_option("--edited-first", eval_edited, "edited first frame PNG")->required();
    eval_cmd->add_option("--preserve-mask", eval_preserve, "preserve-mask directory");
    eval_cmd->add_option("--out", eval_out, "report file");

    // make-mask
    auto* mask_cmd = app.add_subcommand("make-mask", "Write a mask frame directory");
    std::string mask_kind, mask_size = "64x64", mask_region, mask_out;
    int mask_frames = 1;
    mask_cmd->add_option("--kind", mask_kind, "default|none|all|selective|disentangle|appearance")
        ->required();
    mask_cmd->add_option("--frames", mask_frames, "frame count");
    mask_cmd->add_option("--size", mask_size, "WxH");
    mask_cmd->add_option("--region", mask_region, "edit-region mask directory");
    mask_cmd->add_option("--out", mask_out, "output directory")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate the moving-square dataset");
    SynthSpec spec;
    std::string synth_out, synth_pos = "2,12", synth_vel = "2,0", synth_size = "32x32";
    std::vector<int> synth_appearance;
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--frames", spec.frames, "frame count");
    synth_cmd->add_option("--size", synth_size, "WxH");
    synth_cmd->add_option("--square", spec.square, "square side in pixels");
    synth_cmd->add_option("--pos", synth_pos, "start x,y of the square");
    synth_cmd->add_option("--vel", synth_vel, "velocity x,y in px/frame");
    synth_cmd->add_option("--seed", spec.seed, "dataset seed");
    synth_cmd->add_option("--appearance-frame", synth_appearance,
                          "also emit an edited frame at this 1-based index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_config, train_overrides);
        if (prop_cmd->parsed()) return cmd_propagate(prop_config, prop_overrides, prop_eval);
        if (eval_cmd->parsed()) {
            return cmd_evaluate(eval_gen, eval_input, eval_edited, eval_preserve, eval_out);
        }
        if (mask_cmd->parsed()) {
            return cmd_make_mask(mask_kind, mask_frames, mask_size, mask_region, mask_out);
        }
        if (synth_cmd->parsed()) {
            const SizeArg sz = parse_size(synth_size);
            spec.width = sz.w;
            spec.height = sz.h;
            std::tie(spec.start_x, spec.start_y) = parse_pair(synth_pos);
            std::tie(spec.vel_x, spec.vel_y) = parse_pair(synth_vel);
            return cmd_synth(spec, synth_out, synth_appearance);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
