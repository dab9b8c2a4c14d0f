#include "editprop/metrics.hpp"

#include "editprop/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace editprop {

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeError("embedding dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na <= 0 || nb <= 0) throw ShapeError("embedding has zero norm");
    return dot / std::sqrt(na * nb);
}

} // namespace

std::vector<float> ToyEmbeddingProvider::embed(const VideoTensor& frame) const {
    if (frame.data.t != 1) throw ShapeError("embed expects a single frame");
    constexpr int kGrid = 8;
    const int h = frame.data.h, w = frame.data.w;
    std::vector<float> feat(std::size_t(3) * kGrid * kGrid, 0.0f);
    for (int ci = 0; ci < 3; ++ci) {
        for (int gy = 0; gy < kGrid; ++gy) {
            int y0 = gy * h / kGrid, y1 = (gy + 1) * h / kGrid;
            if (y1 <= y0) y1 = std::min(y0 + 1, h);
            for (int gx = 0; gx < kGrid; ++gx) {
                int x0 = gx * w / kGrid, x1 = (gx + 1) * w / kGrid;
                if (x1 <= x0) x1 = std::min(x0 + 1, w);
                double sum = 0;
                for (int yi = y0; yi < y1; ++yi)
                    for (int xi = x0; xi < x1; ++xi) sum += frame.data.at(ci, 0, yi, xi);
                feat[(std::size_t(ci) * kGrid + gy) * kGrid + gx] =
                    float(sum / double((y1 - y0) * (x1 - x0)));
            }
        }
    }
    double norm = 0;
    for (float v : feat) norm += double(v) * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        // Blank frame: fall back to a fixed unit vector.
        std::fill(feat.begin(), feat.end(), 0.0f);
        feat[0] = 1.0f;
        return feat;
    }
    for (float& v : feat) v = float(v / norm);
    return feat;
}

double clip_score(const VideoTensor& gen, const VideoTensor& edited_first,
                  const EmbeddingProvider& provider) {
    if (gen.data.t < 1) throw ShapeError("empty video");
    if (edited_first.data.t != 1) throw ShapeError("edited reference must be a single frame");
    const auto ref = provider.embed(edited_first);
    double acc = 0;
    for (int ti = 0; ti < gen.data.t; ++ti) {
        acc += cosine(provider.embed(frame_at(gen, ti)), ref);
    }
    return acc / gen.data.t;
}

double input_similarity(const VideoTensor& gen, const VideoTensor& input,
                        const EmbeddingProvider& provider) {
    if (gen.data.t != input.data.t) {
        throw ShapeError("input_similarity needs equal frame counts, got " +
                         std::to_string(gen.data.t) + " vs " + std::to_string(input.data.t));
    }
    double acc = 0;
    for (int ti = 0; ti < gen.data.t; ++ti) {
        acc += cosine(provider.embed(frame_at(gen, ti)), provider.embed(frame_at(input, ti)));
    }
    return acc / gen.data.t;
}

double background_mse(const VideoTensor& gen, const VideoTensor& input,
                      const PixelMask& preserve) {
    require_same_shape(gen.data, input.data, "background_mse");
    if (preserve.t != gen.data.t || preserve.h != gen.data.h || preserve.w != gen.data.w) {
        throw ShapeError("preserve mask does not match video shape");
    }
    const std::size_t ones = preserve.count_ones();
    if (ones == 0) throw ShapeError("preserve mask is empty; background region undefined");
    double acc = 0;
    for (int ti = 0; ti < preserve.t; ++ti) {
        for (int yi = 0; yi < preserve.h; ++yi) {
            for (int xi = 0; xi < preserve.w; ++xi) {
                if (!preserve.at(ti, yi, xi)) continue;
                for (int ci = 0; ci < 3; ++ci) {
                    const double d =
                        double(gen.data.at(ci, ti, yi, xi)) - input.data.at(ci, ti, yi, xi);
                    acc += d * d;
                }
            }
        }
    }
    return acc / (3.0 * double(ones));
}

void write_metric_report(const std::string& path,
                         const std::vector<std::pair<std::string, double>>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metric report: " + path);
    char line[96];
    for (const auto& [key, value] : entries) {
        std::snprintf(line, sizeof(line), "%s=%.9e\n", key.c_str(), value);
        out << line;
    }
    if (!out) throw IoError("metric report write failed: " + path);
}

} // namespace editprop
