#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace editprop {

// 8-bit image, interleaved rows. channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;
};

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

} // namespace editprop
