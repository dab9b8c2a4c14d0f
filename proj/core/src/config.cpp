#include "editprop/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace editprop {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string unquote(std::string v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : v) {
        if (ch == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

void require_path(const std::string& what, const std::string& path, bool dir) {
    if (path.empty()) throw ConfigError("config is missing required path: " + what);
    std::error_code ec;
    const bool ok = dir ? fs::is_directory(path, ec) : fs::is_regular_file(path, ec);
    if (!ok) {
        throw ConfigError(what + " does not exist: " + path);
    }
}

} // namespace

uint64_t ExperimentConfig::resolved_backbone_seed() const {
    return backbone_seed ? *backbone_seed : mix_seed(seed, 1);
}
uint64_t ExperimentConfig::resolved_lora_seed() const { return mix_seed(seed, 2); }

std::string ExperimentConfig::resolved_adapter_path() const {
    if (adapter_path) return *adapter_path;
    return (fs::path(out_dir) / "adapter.bin").string();
}

std::string ExperimentConfig::resolved_caption_edited() const {
    return caption_edited ? *caption_edited : caption;
}

LoraConfig ExperimentConfig::make_lora_config() const {
    LoraConfig lc;
    lc.rank = lora_rank;
    lc.alpha = lora_alpha;
    if (!lora_targets.empty()) lc.target_patterns = lora_targets;
    lc.init_seed = resolved_lora_seed();
    return lc;
}

NoiseSchedule ExperimentConfig::make_schedule() const {
    return schedule_mode == ScheduleMode::EpsilonPrediction
               ? NoiseSchedule::make_epsilon(schedule_steps)
               : NoiseSchedule::make_rectified_flow(schedule_steps);
}

TrainPlan ExperimentConfig::make_stage1_plan() const {
    TrainPlan p;
    p.stage = train_stage_from_string(stage1_stage);
    p.steps = stage1_steps;
    p.learning_rate = stage1_lr;
    p.seed = stage1_seed ? *stage1_seed : mix_seed(seed, 3);
    if (clip_len > 0) p.clip_split = ClipSplit{clip_len, clip_overlap};
    p.lora = make_lora_config();
    p.schedule_mode = schedule_mode;
    return p;
}

std::optional<TrainPlan> ExperimentConfig::make_stage2_plan() const {
    if (!stage2_enabled) return std::nullopt;
    TrainPlan p;
    p.stage = TrainStage::Appearance;
    p.steps = stage2_steps;
    p.learning_rate = stage2_lr;
    p.seed = stage2_seed ? *stage2_seed : mix_seed(seed, 4);
    p.lora = make_lora_config();
    p.schedule_mode = schedule_mode;
    return p;
}

SampleSpec ExperimentConfig::make_sample_spec() const {
    SampleSpec s;
    s.num_steps = sample_steps;
    s.guidance_scale = guidance;
    s.seed = sample_seed ? *sample_seed : mix_seed(seed, 5);
    s.schedule_mode = schedule_mode;
    return s;
}

void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string value = unquote(trim(raw));
    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "video") cfg.video_dir = value;
    else if (key == "caption") cfg.caption = value;
    else if (key == "caption_edited") cfg.caption_edited = value;
    else if (key == "region") cfg.region_dir = value;
    else if (key == "edited_first") cfg.edited_first_path = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "adapter") cfg.adapter_path = value;
    else if (key == "backbone.seed") cfg.backbone_seed = parse_u64(key, value);
    else if (key == "backbone.schedule") {
        if (value == "epsilon") cfg.schedule_mode = ScheduleMode::EpsilonPrediction;
        else if (value == "rectified_flow") cfg.schedule_mode = ScheduleMode::RectifiedFlow;
        else throw ConfigError("backbone.schedule must be 'epsilon' or 'rectified_flow'");
    } else if (key == "backbone.train_steps") cfg.schedule_steps = parse_int(key, value);
    else if (key == "backbone.weights_in") cfg.weights_in = value;
    else if (key == "backbone.weights_out") cfg.weights_out = value;
    else if (key == "lora.rank") cfg.lora_rank = parse_int(key, value);
    else if (key == "lora.alpha") cfg.lora_alpha = parse_double(key, value);
    else if (key == "lora.targets") cfg.lora_targets = split_list(value);
    else if (key == "stage1.stage") cfg.stage1_stage = value;
    else if (key == "stage1.steps") cfg.stage1_steps = parse_int(key, value);
    else if (key == "stage1.lr") cfg.stage1_lr = parse_double(key, value);
    else if (key == "stage1.clip_len") cfg.clip_len = parse_int(key, value);
    else if (key == "stage1.overlap") cfg.clip_overlap = parse_int(key, value);
    else if (key == "stage1.seed") cfg.stage1_seed = parse_u64(key, value);
    else if (key == "stage2.enabled") cfg.stage2_enabled = parse_bool(key, value);
    else if (key == "stage2.steps") cfg.stage2_steps = parse_int(key, value);
    else if (key == "stage2.lr") cfg.stage2_lr = parse_double(key, value);
    else if (key == "stage2.seed") cfg.stage2_seed = parse_u64(key, value);
    else if (key == "appearance.frames") {
        cfg.appearance_frames.clear();
        for (const auto& item : split_list(value)) {
            cfg.appearance_frames.push_back(parse_int(key, item));
        }
    } else if (key == "appearance.targets") cfg.appearance_dir = value;
    else if (key == "sample.steps") cfg.sample_steps = parse_int(key, value);
    else if (key == "sample.guidance") cfg.guidance = parse_double(key, value);
    else if (key == "sample.seed") cfg.sample_seed = parse_u64(key, value);
    else if (key == "eval.input") cfg.eval_input_dir = value;
    else throw ConfigError("unknown config key: " + key);
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
        }
        set_config_key(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return cfg;
}

void validate_for_train(const ExperimentConfig& cfg) {
    require_path("video directory", cfg.video_dir, true);
    if (cfg.out_dir.empty()) throw ConfigError("config is missing required path: out");
    const TrainPlan p1 = cfg.make_stage1_plan();
    p1.validate();
    if (p1.stage == TrainStage::Disentangle) {
        require_path("region directory", cfg.region_dir, true);
    }
    if (cfg.stage2_enabled) {
        if (cfg.appearance_frames.empty()) {
            throw ConfigError("stage2 requires appearance.frames");
        }
        require_path("appearance targets directory", cfg.appearance_dir, true);
        require_path("region directory", cfg.region_dir, true);
        cfg.make_stage2_plan()->validate();
        for (int f : cfg.appearance_frames) {
            if (f < 1) throw ConfigError("appearance.frames are 1-based, got " + std::to_string(f));
        }
    }
    if (!cfg.weights_in.empty()) require_path("weights file", cfg.weights_in, false);
}

void validate_for_propagate(const ExperimentConfig& cfg) {
    require_path("video directory", cfg.video_dir, true);
    require_path("edited first frame", cfg.edited_first_path, false);
    if (cfg.out_dir.empty()) throw ConfigError("config is missing required path: out");
    const std::string adapter = cfg.resolved_adapter_path();
    if (!fs::is_regular_file(adapter)) {
        throw ConfigError("adapter file does not exist: " + adapter);
    }
    if (!cfg.region_dir.empty()) require_path("region directory", cfg.region_dir, true);
    if (!cfg.eval_input_dir.empty()) require_path("eval input directory", cfg.eval_input_dir, true);
    if (!cfg.weights_in.empty()) require_path("weights file", cfg.weights_in, false);
    cfg.make_sample_spec().validate();
}

} // namespace editprop
