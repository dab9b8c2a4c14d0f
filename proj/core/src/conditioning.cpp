#include "editprop/conditioning.hpp"

#include <algorithm>

namespace editprop {

const char* to_string(MaskConfigKind kind) {
    switch (kind) {
        case MaskConfigKind::DefaultI2V: return "default";
        case MaskConfigKind::NoPreservation: return "none";
        case MaskConfigKind::AllPreservation: return "all";
        case MaskConfigKind::SelectivePreservation: return "selective";
        case MaskConfigKind::Disentangle: return "disentangle";
        case MaskConfigKind::Appearance: return "appearance";
    }
    return "?";
}

MaskConfigKind mask_kind_from_string(const std::string& name) {
    if (name == "default") return MaskConfigKind::DefaultI2V;
    if (name == "none") return MaskConfigKind::NoPreservation;
    if (name == "all") return MaskConfigKind::AllPreservation;
    if (name == "selective") return MaskConfigKind::SelectivePreservation;
    if (name == "disentangle") return MaskConfigKind::Disentangle;
    if (name == "appearance") return MaskConfigKind::Appearance;
    throw ConfigError("unknown mask kind: " + name);
}

VideoTensor build_condition_video(const VideoTensor& video, const PixelMask& mask) {
    if (mask.t != video.data.t || mask.h != video.data.h || mask.w != video.data.w) {
        throw ShapeError("mask " + std::to_string(mask.t) + "x" + std::to_string(mask.h) + "x" +
                         std::to_string(mask.w) + " does not match video " + video.data.shape_str());
    }
    VideoTensor out = video;
    for (int ti = 0; ti < mask.t; ++ti) {
        for (int yi = 0; yi < mask.h; ++yi) {
            for (int xi = 0; xi < mask.w; ++xi) {
                if (mask.at(ti, yi, xi) == 0) {
                    for (int ci = 0; ci < 3; ++ci) out.data.at(ci, ti, yi, xi) = 0.0f;
                }
            }
        }
    }
    return out;
}

namespace {

// Region frame lookup with single-frame broadcast.
const PixelMask& check_region(const PixelMask* region, int t, int h, int w, MaskConfigKind kind) {
    if (region == nullptr) {
        throw ShapeError(std::string("mask kind '") + to_string(kind) + "' requires a region");
    }
    if (region->h != h || region->w != w || (region->t != t && region->t != 1)) {
        throw ShapeError("region shape mismatch for mask kind '" + std::string(to_string(kind)) +
                         "'");
    }
    return *region;
}

uint8_t region_at(const PixelMask& region, int ti, int yi, int xi) {
    return region.at(region.t == 1 ? 0 : ti, yi, xi);
}

} // namespace

PixelMask make_mask(MaskConfigKind kind, int t, int h, int w, const PixelMask* region) {
    if (t < 1 || h < 1 || w < 1) throw ShapeError("mask dims must be positive");
    PixelMask m(t, h, w, 0);
    switch (kind) {
        case MaskConfigKind::DefaultI2V:
            std::fill_n(m.data.begin(), std::size_t(h) * w, uint8_t(1));
            break;
        case MaskConfigKind::NoPreservation:
            break;
        case MaskConfigKind::AllPreservation:
            std::fill(m.data.begin(), m.data.end(), uint8_t(1));
            break;
        case MaskConfigKind::SelectivePreservation: {
            const PixelMask& r = check_region(region, t, h, w, kind);
            for (int ti = 0; ti < t; ++ti)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi)
                        m.at(ti, yi, xi) = uint8_t(1 - region_at(r, ti, yi, xi));
            break;
        }
        case MaskConfigKind::Disentangle: {
            const PixelMask& r = check_region(region, t, h, w, kind);
            std::fill_n(m.data.begin(), std::size_t(h) * w, uint8_t(1));
            for (int ti = 1; ti < t; ++ti)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi)
                        m.at(ti, yi, xi) = uint8_t(1 - region_at(r, ti, yi, xi));
            break;
        }
        case MaskConfigKind::Appearance: {
            if (t != 1) throw ShapeError("appearance masks are single-frame, got t=" + std::to_string(t));
            const PixelMask& r = check_region(region, t, h, w, kind);
            for (int yi = 0; yi < h; ++yi)
                for (int xi = 0; xi < w; ++xi)
                    m.at(0, yi, xi) = uint8_t(1 - region_at(r, 0, yi, xi));
            break;
        }
    }
    return m;
}

LatentMask to_latent_mask(const PixelMask& m, const CodecSpec& spec) {
    if (m.t % spec.temporal_factor != 0 || m.h % spec.spatial_factor != 0 ||
        m.w % spec.spatial_factor != 0) {
        throw ShapeError("mask dims not divisible by codec factors");
    }
    const int ft = spec.temporal_factor, fs = spec.spatial_factor;
    LatentMask lm(m.t / ft, m.h / fs, m.w / fs);
    for (int ti = 0; ti < lm.t; ++ti) {
        for (int yi = 0; yi < lm.h; ++yi) {
            for (int xi = 0; xi < lm.w; ++xi) {
                uint8_t all_ones = 1;
                for (int dt = 0; dt < ft && all_ones; ++dt)
                    for (int dy = 0; dy < fs && all_ones; ++dy)
                        for (int dx = 0; dx < fs; ++dx)
                            if (m.at(ti * ft + dt, yi * fs + dy, xi * fs + dx) == 0) {
                                all_ones = 0;
                                break;
                            }
                lm.at(ti, yi, xi) = all_ones;
            }
        }
    }
    return lm;
}

VideoTensor substitute_first_frame(const VideoTensor& video, const VideoTensor& edited) {
    if (edited.data.t != 1) throw ShapeError("edited frame must have T=1");
    if (edited.data.h != video.data.h || edited.data.w != video.data.w) {
        throw ShapeError("edited frame is " + std::to_string(edited.data.h) + "x" +
                         std::to_string(edited.data.w) + ", video frames are " +
                         std::to_string(video.data.h) + "x" + std::to_string(video.data.w));
    }
    VideoTensor out = video;
    for (int ci = 0; ci < 3; ++ci)
        for (int yi = 0; yi < video.data.h; ++yi)
            for (int xi = 0; xi < video.data.w; ++xi)
                out.data.at(ci, 0, yi, xi) = edited.data.at(ci, 0, yi, xi);
    return out;
}

} // namespace editprop
