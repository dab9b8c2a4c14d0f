#include "editprop/media.hpp"

#include "editprop/errors.hpp"
#include "editprop/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>

namespace fs = std::filesystem;

namespace editprop {

namespace {

// Numeric frame index parsed from the last digit run in the stem, so
// frame_7.png and frame_0007.png sort identically.
std::optional<long> frame_index(const fs::path& p) {
    const std::string stem = p.stem().string();
    auto end = stem.find_last_of("0123456789");
    if (end == std::string::npos) return std::nullopt;
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    return std::stol(stem.substr(begin, end - begin + 1));
}

std::vector<fs::path> list_frames(const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw IoError("not a frame directory: " + dir);
    }
    std::vector<std::pair<long, fs::path>> indexed;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path& p = entry.path();
        if (p.extension() != ".png") continue;
        if (auto idx = frame_index(p)) indexed.emplace_back(*idx, p);
    }
    if (indexed.empty()) {
        throw IoError("no numbered .png frames in " + dir);
    }
    std::sort(indexed.begin(), indexed.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<fs::path> out;
    out.reserve(indexed.size());
    for (auto& [idx, p] : indexed) out.push_back(std::move(p));
    return out;
}

uint8_t quantize(float v) {
    const float s = std::round((v + 1.0f) * 127.5f);
    return uint8_t(std::clamp(s, 0.0f, 255.0f));
}

float dequantize(uint8_t s) { return float(s) / 127.5f - 1.0f; }

std::string frame_name(int index_1based) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.png", index_1based);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory: " + dir);
    }
}

} // namespace

void validate(const VideoTensor& v) {
    if (v.data.c != 3) throw ShapeError("video must have 3 channels, got " + std::to_string(v.data.c));
    if (v.data.t < 1) throw ShapeError("video must have at least one frame");
    if (v.data.h % 2 != 0 || v.data.w % 2 != 0) {
        throw ShapeError("video spatial dims must be even, got " + std::to_string(v.data.h) + "x" +
                         std::to_string(v.data.w));
    }
    for (float x : v.data.data) {
        if (!(x >= -1.0f && x <= 1.0f)) {
            throw ShapeError("video values must lie in [-1,1]");
        }
    }
}

void validate(const PixelMask& m) {
    if (m.t < 1 || m.h < 1 || m.w < 1) throw ShapeError("mask must be non-empty");
    if (m.data.size() != std::size_t(m.t) * m.h * m.w) throw ShapeError("mask buffer size mismatch");
    for (uint8_t v : m.data) {
        if (v != 0 && v != 1) throw ShapeError("mask values must be exactly 0 or 1");
    }
}

VideoTensor make_video(int t, int h, int w, float fill) {
    VideoTensor v;
    v.data = Array4<float>(3, t, h, w, fill);
    return v;
}

VideoTensor frame_at(const VideoTensor& v, int ti) {
    if (ti < 0 || ti >= v.data.t) throw ShapeError("frame index out of range");
    VideoTensor out = make_video(1, v.data.h, v.data.w);
    out.fps = v.fps;
    for (int ci = 0; ci < 3; ++ci) {
        for (int yi = 0; yi < v.data.h; ++yi) {
            for (int xi = 0; xi < v.data.w; ++xi) {
                out.data.at(ci, 0, yi, xi) = v.data.at(ci, ti, yi, xi);
            }
        }
    }
    return out;
}

VideoTensor load_video(const std::string& path) {
    const auto frames = list_frames(path);
    VideoTensor v;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        Image img = read_png(frames[i].string());
        if (i == 0) {
            v.data = Array4<float>(3, int(frames.size()), img.height, img.width);
        } else if (img.width != v.data.w || img.height != v.data.h) {
            throw ShapeError("inconsistent frame dimensions in " + path + " at " +
                             frames[i].filename().string());
        }
        for (int yi = 0; yi < img.height; ++yi) {
            for (int xi = 0; xi < img.width; ++xi) {
                for (int ci = 0; ci < 3; ++ci) {
                    const uint8_t s = img.channels == 3
                                          ? img.pixels[(std::size_t(yi) * img.width + xi) * 3 + ci]
                                          : img.pixels[std::size_t(yi) * img.width + xi];
                    v.data.at(ci, int(i), yi, xi) = dequantize(s);
                }
            }
        }
    }
    validate(v);
    return v;
}

void save_video(const VideoTensor& v, const std::string& dir) {
    validate(v);
    ensure_dir(dir);
    Image img;
    img.width = v.data.w;
    img.height = v.data.h;
    img.channels = 3;
    img.pixels.resize(std::size_t(img.width) * img.height * 3);
    for (int ti = 0; ti < v.data.t; ++ti) {
        for (int yi = 0; yi < img.height; ++yi) {
            for (int xi = 0; xi < img.width; ++xi) {
                for (int ci = 0; ci < 3; ++ci) {
                    img.pixels[(std::size_t(yi) * img.width + xi) * 3 + ci] =
                        quantize(v.data.at(ci, ti, yi, xi));
                }
            }
        }
        write_png((fs::path(dir) / frame_name(ti + 1)).string(), img);
    }
}

VideoTensor load_frame_file(const std::string& png_path) {
    Image img = read_png(png_path);
    VideoTensor v = make_video(1, img.height, img.width);
    for (int yi = 0; yi < img.height; ++yi) {
        for (int xi = 0; xi < img.width; ++xi) {
            for (int ci = 0; ci < 3; ++ci) {
                const uint8_t s = img.channels == 3
                                      ? img.pixels[(std::size_t(yi) * img.width + xi) * 3 + ci]
                                      : img.pixels[std::size_t(yi) * img.width + xi];
                v.data.at(ci, 0, yi, xi) = dequantize(s);
            }
        }
    }
    validate(v);
    return v;
}

void save_frame_file(const VideoTensor& frame, const std::string& png_path) {
    validate(frame);
    if (frame.data.t != 1) throw ShapeError("save_frame_file expects a single frame");
    Image img;
    img.width = frame.data.w;
    img.height = frame.data.h;
    img.channels = 3;
    img.pixels.resize(std::size_t(img.width) * img.height * 3);
    for (int yi = 0; yi < img.height; ++yi)
        for (int xi = 0; xi < img.width; ++xi)
            for (int ci = 0; ci < 3; ++ci)
                img.pixels[(std::size_t(yi) * img.width + xi) * 3 + ci] =
                    quantize(frame.data.at(ci, 0, yi, xi));
    write_png(png_path, img);
}

PixelMask load_mask_sequence(const std::string& dir, int expect_t, int expect_h, int expect_w) {
    const auto frames = list_frames(dir);
    if (frames.size() != std::size_t(expect_t) && frames.size() != 1) {
        throw ShapeError("mask sequence in " + dir + " has " + std::to_string(frames.size()) +
                         " frames, expected " + std::to_string(expect_t) + " (or 1 to broadcast)");
    }
    PixelMask m(expect_t, expect_h, expect_w);
    const bool broadcast = frames.size() == 1;
    for (int ti = 0; ti < expect_t; ++ti) {
        const auto& path = frames[broadcast ? 0 : std::size_t(ti)];
        Image img = read_png(path.string());
        if (img.width != expect_w || img.height != expect_h) {
            throw ShapeError("mask frame " + path.filename().string() + " is " +
                             std::to_string(img.width) + "x" + std::to_string(img.height) +
                             ", expected " + std::to_string(expect_w) + "x" +
                             std::to_string(expect_h));
        }
        for (int yi = 0; yi < expect_h; ++yi) {
            for (int xi = 0; xi < expect_w; ++xi) {
                int gray = 0;
                if (img.channels == 1) {
                    gray = img.pixels[std::size_t(yi) * img.width + xi];
                } else {
                    const std::size_t base = (std::size_t(yi) * img.width + xi) * 3;
                    gray = (int(img.pixels[base]) + img.pixels[base + 1] + img.pixels[base + 2]) / 3;
                }
                m.at(ti, yi, xi) = gray >= 128 ? 1 : 0;
            }
        }
        if (broadcast && ti == 0) {
            for (int tb = 1; tb < expect_t; ++tb) {
                std::copy_n(m.data.begin(), std::size_t(m.h) * m.w,
                            m.data.begin() + std::size_t(tb) * m.h * m.w);
            }
            break;
        }
    }
    validate(m);
    return m;
}

void save_mask_sequence(const PixelMask& m, const std::string& dir) {
    validate(m);
    ensure_dir(dir);
    Image img;
    img.width = m.w;
    img.height = m.h;
    img.channels = 1;
    img.pixels.resize(std::size_t(m.w) * m.h);
    for (int ti = 0; ti < m.t; ++ti) {
        for (int yi = 0; yi < m.h; ++yi) {
            for (int xi = 0; xi < m.w; ++xi) {
                img.pixels[std::size_t(yi) * m.w + xi] = m.at(ti, yi, xi) ? 255 : 0;
            }
        }
        write_png((fs::path(dir) / frame_name(ti + 1)).string(), img);
    }
}

} // namespace editprop
