#pragma once

#include "editprop/lora.hpp"
#include "editprop/sampler.hpp"
#include "editprop/schedule.hpp"
#include "editprop/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace editprop {

// One experiment = one config file. Every knob has a default; sub-seeds are
// derived from the master seed unless set explicitly.
struct ExperimentConfig {
    uint64_t seed = 0;

    std::string video_dir;
    std::string caption = "a scene";
    std::optional<std::string> caption_edited; // defaults to caption
    std::string region_dir;
    std::string edited_first_path;
    std::string out_dir;
    std::optional<std::string> adapter_path; // defaults to <out>/adapter.bin

    std::optional<uint64_t> backbone_seed;
    ScheduleMode schedule_mode = ScheduleMode::EpsilonPrediction;
    int schedule_steps = 1000;
    std::string weights_in;  // optional: load toy weights instead of seeding
    std::string weights_out; // optional: persist toy weights after training

    int lora_rank = 16;
    double lora_alpha = 16.0;
    std::vector<std::string> lora_targets; // empty -> library default

    std::string stage1_stage = "disentangle";
    int stage1_steps = 100;
    double stage1_lr = 1e-4;
    int clip_len = 0; // 0 disables clip splitting
    int clip_overlap = 1;
    std::optional<uint64_t> stage1_seed;

    bool stage2_enabled = false;
    int stage2_steps = 100;
    double stage2_lr = 1e-4;
    std::optional<uint64_t> stage2_seed;
    std::vector<int> appearance_frames; // 1-based frame indices
    std::string appearance_dir;

    int sample_steps = 30;
    double guidance = 1.0;
    std::optional<uint64_t> sample_seed;

    std::string eval_input_dir;

    // resolved values
    uint64_t resolved_backbone_seed() const;
    uint64_t resolved_lora_seed() const;
    std::string resolved_adapter_path() const;
    std::string resolved_caption_edited() const;
    LoraConfig make_lora_config() const;
    NoiseSchedule make_schedule() const;
    TrainPlan make_stage1_plan() const;
    std::optional<TrainPlan> make_stage2_plan() const;
    SampleSpec make_sample_spec() const;
};

ExperimentConfig load_config_file(const std::string& path);

// Shared by the file parser and --set overrides. Unknown keys are errors.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Fail-fast checks before any compute.
void validate_for_train(const ExperimentConfig& cfg);
void validate_for_propagate(const ExperimentConfig& cfg);

} // namespace editprop
