#pragma once

#include "editprop/codec.hpp"
#include "editprop/media.hpp"
#include "editprop/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace editprop {

// Binary mask on the latent grid, 1×T_lat×h×w.
struct LatentMask {
    int t = 0, h = 0, w = 0;
    std::vector<uint8_t> data;

    LatentMask() = default;
    LatentMask(int t_, int h_, int w_, uint8_t fill = 0)
        : t(t_), h(h_), w(w_), data(std::size_t(t_) * h_ * w_, fill) {}

    std::size_t index(int ti, int yi, int xi) const { return (std::size_t(ti) * h + yi) * w + xi; }
    uint8_t& at(int ti, int yi, int xi) { return data[index(ti, yi, xi)]; }
    uint8_t at(int ti, int yi, int xi) const { return data[index(ti, yi, xi)]; }

    std::size_t count_ones() const {
        std::size_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

enum class MaskConfigKind {
    DefaultI2V,
    NoPreservation,
    AllPreservation,
    SelectivePreservation,
    Disentangle,
    Appearance,
};

const char* to_string(MaskConfigKind kind);
MaskConfigKind mask_kind_from_string(const std::string& name);

// Condition triple consumed by the denoiser: masked video in latent space,
// the latent-resolution mask, and the prompt token ids.
template <typename S>
struct ConditioningBundle {
    Array4<S> cond_latent;
    LatentMask mask;
    std::vector<int32_t> prompt_tokens;
};

// Elementwise mask application, broadcast over channels. Masked-out sites
// become exactly 0, preserved sites carry the input untouched.
VideoTensor build_condition_video(const VideoTensor& video, const PixelMask& mask);

// Builds the preserve/generate mask for a configuration. `region` is the
// per-frame edited footprint (1 inside the edit) and is required for
// SelectivePreservation, Disentangle, and Appearance; a single-frame region
// broadcasts across frames.
PixelMask make_mask(MaskConfigKind kind, int t, int h, int w, const PixelMask* region = nullptr);

// A latent cell is preserved only if every pixel it covers (spatially and
// temporally) is preserved.
LatentMask to_latent_mask(const PixelMask& m, const CodecSpec& spec);

// Replaces frame 1, leaving all later frames untouched.
VideoTensor substitute_first_frame(const VideoTensor& video, const VideoTensor& edited);

template <typename S>
ConditioningBundle<S> assemble_bundle_pre_masked(const VideoTensor& cond_video,
                                                 const PixelMask& mask,
                                                 std::vector<int32_t> prompt_tokens,
                                                 const ToyCodec& codec) {
    if (prompt_tokens.empty()) throw ShapeError("prompt tokens must be non-empty");
    ConditioningBundle<S> b;
    b.cond_latent = codec.encode<S>(cond_video);
    b.mask = to_latent_mask(mask, codec.spec());
    b.prompt_tokens = std::move(prompt_tokens);
    return b;
}

template <typename S>
ConditioningBundle<S> assemble_bundle(const VideoTensor& video, const PixelMask& mask,
                                      std::vector<int32_t> prompt_tokens, const ToyCodec& codec) {
    return assemble_bundle_pre_masked<S>(build_condition_video(video, mask), mask,
                                         std::move(prompt_tokens), codec);
}

} // namespace editprop
