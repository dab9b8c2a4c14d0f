#include "editprop/synth.hpp"

#include "editprop/errors.hpp"
#include "editprop/rng.hpp"

#include <cmath>

namespace editprop {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Background {
    SynthBackground kind;
    uint64_t seed;
    double base[3], amp[3], fx[3], fy[3], phase[3];

    Background(uint64_t seed_, SynthBackground kind_) : kind(kind_), seed(seed_) {
        Rng rng(mix_seed(seed, 0x62670000));
        for (int c = 0; c < 3; ++c) {
            base[c] = rng.uniform(-0.3, 0.3);
            amp[c] = rng.uniform(0.15, 0.25);
            fx[c] = rng.uniform(0.5, 2.0);
            fy[c] = rng.uniform(0.5, 2.0);
            phase[c] = rng.uniform(0.0, kTwoPi);
        }
    }

    float at(int c, int y, int x, int h, int w) const {
        if (kind == SynthBackground::Noise) {
            const uint64_t cell = mix_seed(seed, (uint64_t(c) << 40) ^ (uint64_t(y) << 20) ^
                                                     uint64_t(x));
            return float(double(cell >> 11) * 0x1.0p-53 * 1.6 - 0.8);
        }
        return float(base[c] +
                     amp[c] * std::sin(kTwoPi * (fx[c] * x / w + fy[c] * y / h) + phase[c]));
    }
};

void check_spec(const SynthSpec& spec) {
    if (spec.frames < 1 || spec.height < 2 || spec.width < 2 || spec.height % 2 || spec.width % 2) {
        throw ConfigError("synth: frames >= 1 and even height/width >= 2 required");
    }
    if (spec.square < 1 || spec.square > spec.height || spec.square > spec.width) {
        throw ConfigError("synth: degenerate square size");
    }
    for (int f = 0; f < spec.frames; ++f) {
        auto [ox, oy] = square_origin(spec, f);
        if (ox < 0 || oy < 0 || ox + spec.square > spec.width || oy + spec.square > spec.height) {
            throw ConfigError("synth: square leaves the frame at frame " + std::to_string(f + 1));
        }
    }
}

void paint_frame(VideoTensor& v, int ti, const SynthSpec& spec, const Background& bg,
                 const std::array<float, 3>& square_color, int ox, int oy) {
    for (int ci = 0; ci < 3; ++ci) {
        for (int yi = 0; yi < spec.height; ++yi) {
            for (int xi = 0; xi < spec.width; ++xi) {
                const bool inside = xi >= ox && xi < ox + spec.square && yi >= oy &&
                                    yi < oy + spec.square;
                v.data.at(ci, ti, yi, xi) =
                    inside ? square_color[std::size_t(ci)]
                           : bg.at(ci, yi, xi, spec.height, spec.width);
            }
        }
    }
}

} // namespace

std::pair<int, int> square_origin(const SynthSpec& spec, int frame_index) {
    return {int(std::llround(spec.start_x + spec.vel_x * frame_index)),
            int(std::llround(spec.start_y + spec.vel_y * frame_index))};
}

SynthDataset make_synth(const SynthSpec& spec) {
    check_spec(spec);
    const Background bg(spec.seed, spec.background);
    SynthDataset ds;
    ds.video = make_video(spec.frames, spec.height, spec.width);
    ds.region = PixelMask(spec.frames, spec.height, spec.width, 0);
    for (int f = 0; f < spec.frames; ++f) {
        auto [ox, oy] = square_origin(spec, f);
        paint_frame(ds.video, f, spec, bg, spec.square_color, ox, oy);
        for (int yi = oy; yi < oy + spec.square; ++yi)
            for (int xi = ox; xi < ox + spec.square; ++xi) ds.region.at(f, yi, xi) = 1;
    }
    ds.edited_first = synth_edited_frame(spec, 0);
    return ds;
}

VideoTensor synth_edited_frame(const SynthSpec& spec, int frame_index) {
    check_spec(spec);
    if (frame_index < 0 || frame_index >= spec.frames) {
        throw ConfigError("synth: frame index out of range");
    }
    const Background bg(spec.seed, spec.background);
    VideoTensor out = make_video(1, spec.height, spec.width);
    auto [ox, oy] = square_origin(spec, frame_index);
    paint_frame(out, 0, spec, bg, spec.edit_color, ox, oy);
    return out;
}

} // namespace editprop
