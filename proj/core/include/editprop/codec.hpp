#pragma once

#include "editprop/media.hpp"
#include "editprop/tensor.hpp"

#include <algorithm>

namespace editprop {

struct CodecSpec {
    int spatial_factor = 2;
    int temporal_factor = 1;
    int latent_channels = 12;
};

// Invertible linear patchify codec: each temporal group of spatial
// patches becomes one latent site, pixel values rearranged into channels.
// latent_channels must equal 3 * temporal_factor * spatial_factor^2.
class ToyCodec {
public:
    explicit ToyCodec(CodecSpec spec = {}) : spec_(spec) {
        if (spec_.spatial_factor < 1 || spec_.temporal_factor < 1) {
            throw ConfigError("codec factors must be >= 1");
        }
        const int expected = 3 * spec_.temporal_factor * spec_.spatial_factor * spec_.spatial_factor;
        if (spec_.latent_channels != expected) {
            throw ConfigError("latent_channels must be " + std::to_string(expected) +
                              " for the patchify codec, got " + std::to_string(spec_.latent_channels));
        }
    }

    const CodecSpec& spec() const { return spec_; }

    void check_divisible(int t, int h, int w) const {
        if (t % spec_.temporal_factor != 0 || h % spec_.spatial_factor != 0 ||
            w % spec_.spatial_factor != 0) {
            throw ShapeError("video dims " + std::to_string(t) + "x" + std::to_string(h) + "x" +
                             std::to_string(w) + " not divisible by codec factors");
        }
    }

    // Latent grid for a given pixel video shape.
    void latent_shape(int t, int h, int w, int& lt, int& lh, int& lw) const {
        check_divisible(t, h, w);
        lt = t / spec_.temporal_factor;
        lh = h / spec_.spatial_factor;
        lw = w / spec_.spatial_factor;
    }

    template <typename S>
    Array4<S> encode(const VideoTensor& v) const {
        int lt, lh, lw;
        latent_shape(v.data.t, v.data.h, v.data.w, lt, lh, lw);
        const int fs = spec_.spatial_factor, ft = spec_.temporal_factor;
        Array4<S> z(spec_.latent_channels, lt, lh, lw);
        for (int ci = 0; ci < 3; ++ci) {
            for (int dt = 0; dt < ft; ++dt) {
                for (int dy = 0; dy < fs; ++dy) {
                    for (int dx = 0; dx < fs; ++dx) {
                        const int lc = ((ci * ft + dt) * fs + dy) * fs + dx;
                        for (int ti = 0; ti < lt; ++ti) {
                            for (int yi = 0; yi < lh; ++yi) {
                                for (int xi = 0; xi < lw; ++xi) {
                                    z.at(lc, ti, yi, xi) =
                                        S(v.data.at(ci, ti * ft + dt, yi * fs + dy, xi * fs + dx));
                                }
                            }
                        }
                    }
                }
            }
        }
        return z;
    }

    // Inverse rearrangement; output pixels clamped into the valid [-1,1] range.
    template <typename S>
    VideoTensor decode(const Array4<S>& z) const {
        if (z.c != spec_.latent_channels) {
            throw ShapeError("latent has " + std::to_string(z.c) + " channels, codec expects " +
                             std::to_string(spec_.latent_channels));
        }
        const int fs = spec_.spatial_factor, ft = spec_.temporal_factor;
        VideoTensor v = make_video(z.t * ft, z.h * fs, z.w * fs);
        for (int ci = 0; ci < 3; ++ci) {
            for (int dt = 0; dt < ft; ++dt) {
                for (int dy = 0; dy < fs; ++dy) {
                    for (int dx = 0; dx < fs; ++dx) {
                        const int lc = ((ci * ft + dt) * fs + dy) * fs + dx;
                        for (int ti = 0; ti < z.t; ++ti) {
                            for (int yi = 0; yi < z.h; ++yi) {
                                for (int xi = 0; xi < z.w; ++xi) {
                                    const float px = float(z.at(lc, ti, yi, xi));
                                    v.data.at(ci, ti * ft + dt, yi * fs + dy, xi * fs + dx) =
                                        std::clamp(px, -1.0f, 1.0f);
                                }
                            }
                        }
                    }
                }
            }
        }
        return v;
    }

private:
    CodecSpec spec_;
};

} // namespace editprop
