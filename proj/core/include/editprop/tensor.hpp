#pragma once

#include "editprop/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace editprop {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense 4-D array with axes (channel, frame, row, col), W fastest.
template <typename S>
struct Array4 {
    int c = 0, t = 0, h = 0, w = 0;
    std::vector<S> data;

    Array4() = default;
    Array4(int c_, int t_, int h_, int w_, S fill = S(0))
        : c(c_), t(t_), h(h_), w(w_), data(std::size_t(c_) * t_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int ci, int ti, int yi, int xi) const {
        return ((std::size_t(ci) * t + ti) * h + yi) * w + xi;
    }

    S& at(int ci, int ti, int yi, int xi) { return data[index(ci, ti, yi, xi)]; }
    const S& at(int ci, int ti, int yi, int xi) const { return data[index(ci, ti, yi, xi)]; }

    bool same_shape(const Array4& o) const { return c == o.c && t == o.t && h == o.h && w == o.w; }

    std::string shape_str() const {
        return std::to_string(c) + "x" + std::to_string(t) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }

    template <typename U>
    Array4<U> cast() const {
        Array4<U> out(c, t, h, w);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }
};

template <typename S>
void require_same_shape(const Array4<S>& a, const Array4<S>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

// Token view of a latent: one row per (frame,row,col) site, one column per channel.
template <typename S>
Mat<S> to_tokens(const Array4<S>& a) {
    Mat<S> m(std::ptrdiff_t(a.t) * a.h * a.w, a.c);
    for (int ci = 0; ci < a.c; ++ci) {
        for (int ti = 0; ti < a.t; ++ti) {
            for (int yi = 0; yi < a.h; ++yi) {
                for (int xi = 0; xi < a.w; ++xi) {
                    m((std::ptrdiff_t(ti) * a.h + yi) * a.w + xi, ci) = a.at(ci, ti, yi, xi);
                }
            }
        }
    }
    return m;
}

template <typename S>
Array4<S> from_tokens(const Mat<S>& m, int t, int h, int w) {
    if (m.rows() != std::ptrdiff_t(t) * h * w) {
        throw ShapeError("from_tokens: row count " + std::to_string(m.rows()) +
                         " does not match " + std::to_string(std::ptrdiff_t(t) * h * w) + " sites");
    }
    Array4<S> a(int(m.cols()), t, h, w);
    for (int ci = 0; ci < a.c; ++ci) {
        for (int ti = 0; ti < t; ++ti) {
            for (int yi = 0; yi < h; ++yi) {
                for (int xi = 0; xi < w; ++xi) {
                    a.at(ci, ti, yi, xi) = m((std::ptrdiff_t(ti) * h + yi) * w + xi, ci);
                }
            }
        }
    }
    return a;
}

// FNV-1a over raw bytes; used for weight fingerprints and file checksums.
inline uint64_t fnv1a64(const void* bytes, std::size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    uint64_t hash = seed;
    for (std::size_t i = 0; i < n; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

template <typename S>
uint64_t fingerprint(const Mat<S>& m) {
    return fnv1a64(m.data(), std::size_t(m.size()) * sizeof(S));
}

} // namespace editprop
