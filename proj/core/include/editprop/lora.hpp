#pragma once

#include "editprop/errors.hpp"
#include "editprop/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace editprop {

// '*' matches any run of characters, '?' exactly one.
bool glob_match(const std::string& pattern, const std::string& text);

struct LoraConfig {
    int rank = 16;
    double alpha = 16.0;
    std::vector<std::string> target_patterns = {
        "blocks.*.self_attn.*_proj",
        "blocks.*.cross_attn.*_proj",
    };
    uint64_t init_seed = 0;

    void validate() const {
        if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
        if (!(alpha > 0.0)) throw ConfigError("LoRA alpha must be > 0");
        if (target_patterns.empty()) throw ConfigError("LoRA target patterns must be non-empty");
    }
};

// Rank-r delta on one projection: W·x + (alpha/r)·B·(A·x).
template <typename S>
struct LoraLayer {
    std::string path;
    int d_in = 0;
    int d_out = 0;
    Mat<S> A; // r × d_in, small uniform init
    Mat<S> B; // d_out × r, zero init
    uint64_t base_fingerprint = 0;
};

template <typename S>
struct LoraAdapter {
    LoraConfig config;
    std::vector<LoraLayer<S>> layers;

    double scaling() const { return config.alpha / double(config.rank); }

    std::size_t find_index(const std::string& path) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].path == path) return i;
        }
        return std::size_t(-1);
    }

    std::size_t trainable_parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += std::size_t(config.rank) * (std::size_t(l.d_in) + l.d_out);
        return n;
    }

    bool all_deltas_zero() const {
        for (const auto& l : layers) {
            if (!l.B.isZero(S(0))) return false;
        }
        return true;
    }

    // Hash over config and every A/B entry; identifies a training state.
    uint64_t state_fingerprint() const {
        uint64_t h = fnv1a64(&config.rank, sizeof(config.rank));
        h = fnv1a64(&config.alpha, sizeof(config.alpha), h);
        for (const auto& l : layers) {
            h = fnv1a64(l.path.data(), l.path.size(), h);
            h = fnv1a64(l.A.data(), std::size_t(l.A.size()) * sizeof(S), h);
            h = fnv1a64(l.B.data(), std::size_t(l.B.size()) * sizeof(S), h);
        }
        return h;
    }
};

// Versioned, checksummed adapter file ("EPLA"). Layout documented in the
// README; float32 payload.
void save_adapter(const LoraAdapter<float>& adapter, const std::string& path);
LoraAdapter<float> load_adapter(const std::string& path);

} // namespace editprop
