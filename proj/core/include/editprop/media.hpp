#pragma once

#include "editprop/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace editprop {

// Pixel-space video, 3×T×H×W, values in [-1, 1]. H and W must be even so the
// 2×2 latent patchify applies. fps is carried as metadata only.
struct VideoTensor {
    Array4<float> data;
    double fps = 16.0;
};

// Binary preserve/generate mask, 1×T×H×W. 1 = preserve, 0 = generate.
struct PixelMask {
    int t = 0, h = 0, w = 0;
    std::vector<uint8_t> data;

    PixelMask() = default;
    PixelMask(int t_, int h_, int w_, uint8_t fill = 0)
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

void validate(const VideoTensor& v);
void validate(const PixelMask& m);

VideoTensor make_video(int t, int h, int w, float fill = 0.0f);

// Extracts frame ti (0-based) as a T=1 video.
VideoTensor frame_at(const VideoTensor& v, int ti);

// Frame-directory I/O. Frames are zero-padded numbered PNGs ordered strictly
// by their numeric index; write emits frame_00001.png onward (1-based).
VideoTensor load_video(const std::string& path);
void save_video(const VideoTensor& v, const std::string& dir);

// One PNG file as a T=1 video.
VideoTensor load_frame_file(const std::string& png_path);
void save_frame_file(const VideoTensor& frame, const std::string& png_path);

// Grayscale mask frames, threshold at 128 (>=128 -> 1). A directory holding a
// single frame is broadcast across all expected frames.
PixelMask load_mask_sequence(const std::string& dir, int expect_t, int expect_h, int expect_w);
void save_mask_sequence(const PixelMask& m, const std::string& dir);

} // namespace editprop
