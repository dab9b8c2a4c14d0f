#pragma once

#include "editprop/media.hpp"

#include <array>
#include <cstdint>

namespace editprop {

enum class SynthBackground {
    Smooth, // low-frequency color waves
    Noise,  // per-pixel static noise; unmemorizable, so conditioning is the
            // only practical source of background content
};

// Moving-square scene: a flat-colored square travels over a static
// background. Geometry is closed-form per frame; everything derives from the
// seed, so generated datasets are byte-reproducible.
struct SynthSpec {
    int frames = 8;
    int height = 32;
    int width = 32;
    int square = 8;
    double start_x = 2.0;
    double start_y = 12.0;
    double vel_x = 2.0;
    double vel_y = 0.0;
    std::array<float, 3> square_color = {0.8f, -0.6f, -0.6f};
    std::array<float, 3> edit_color = {-0.6f, 0.8f, -0.6f};
    SynthBackground background = SynthBackground::Smooth;
    uint64_t seed = 7;
};

struct SynthDataset {
    VideoTensor video;
    PixelMask region;         // square footprint per frame, 1 inside
    VideoTensor edited_first; // frame 1 with the square recolored
};

// Top-left corner of the square at a 0-based frame index.
std::pair<int, int> square_origin(const SynthSpec& spec, int frame_index);

SynthDataset make_synth(const SynthSpec& spec);

// Frame at `frame_index` (0-based) with the square recolored; the appearance
// reference for that timestep.
VideoTensor synth_edited_frame(const SynthSpec& spec, int frame_index);

} // namespace editprop
