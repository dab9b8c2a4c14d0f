#include "editprop/denoiser.hpp"
#include "editprop/lora.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace editprop {

bool glob_match(const std::string& pattern, const std::string& text) {
    const char* p = pattern.c_str();
    const char* s = text.c_str();
    // Iterative matcher with single-star backtracking.
    const char* star = nullptr;
    const char* star_s = nullptr;
    while (*s) {
        if (*p == '*') {
            star = p++;
            star_s = s;
        } else if (*p == '?' || *p == *s) {
            ++p;
            ++s;
        } else if (star) {
            p = star + 1;
            s = ++star_s;
        } else {
            return false;
        }
    }
    while (*p == '*') ++p;
    return *p == '\0';
}

namespace {

constexpr uint32_t kAdapterVersion = 1;
constexpr uint32_t kWeightsVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

// Little-endian buffer writer; the checksum covers everything before it.
struct Writer {
    std::vector<uint8_t> buf;

    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        bytes(s.data(), s.size());
    }
    void mat(const Mat<float>& m) {
        u32(uint32_t(m.rows()));
        u32(uint32_t(m.cols()));
        bytes(m.data(), std::size_t(m.size()) * sizeof(float));
    }

    void finish(const std::string& path) {
        const uint64_t checksum = fnv1a64(buf.data(), buf.size());
        u64(checksum);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write file: " + path);
        out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
        if (!out) throw IoError("write failed: " + path);
    }
};

struct Reader {
    std::vector<uint8_t> buf;
    std::size_t pos = 0;

    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open file: " + path);
        buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        if (buf.size() < 12) throw FormatError("file too small: " + path);
        const std::size_t body = buf.size() - 8;
        uint64_t stored = 0;
        std::memcpy(&stored, buf.data() + body, 8);
        if (stored != fnv1a64(buf.data(), body)) {
            throw FormatError("checksum mismatch, file is corrupted: " + path);
        }
        buf.resize(body);
    }

    void bytes(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw FormatError("truncated file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        if (n > (1u << 20)) throw FormatError("implausible string length");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    Mat<float> mat() {
        const uint32_t rows = u32();
        const uint32_t cols = u32();
        if (std::size_t(rows) * cols > (std::size_t(1) << 28)) {
            throw FormatError("implausible tensor size");
        }
        Mat<float> m(rows, cols);
        bytes(m.data(), std::size_t(m.size()) * sizeof(float));
        return m;
    }
    void expect_magic(const char* magic) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, magic, 4) != 0) throw FormatError("bad magic, not an editprop file");
    }
};

} // namespace

void save_adapter(const LoraAdapter<float>& adapter, const std::string& path) {
    Writer w;
    w.bytes("EPLA", 4);
    w.u32(kAdapterVersion);
    w.u8(kDtypeF32);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u32(uint32_t(adapter.config.rank));
    w.f64(adapter.config.alpha);
    w.u32(uint32_t(adapter.config.target_patterns.size()));
    for (const auto& p : adapter.config.target_patterns) w.str(p);
    w.u32(uint32_t(adapter.layers.size()));
    for (const auto& l : adapter.layers) {
        w.str(l.path);
        w.u32(uint32_t(l.d_in));
        w.u32(uint32_t(l.d_out));
        w.u64(l.base_fingerprint);
        w.mat(l.A);
        w.mat(l.B);
    }
    w.finish(path);
}

LoraAdapter<float> load_adapter(const std::string& path) {
    Reader r(path);
    r.expect_magic("EPLA");
    if (r.u32() != kAdapterVersion) throw FormatError("unsupported adapter version in " + path);
    if (r.u8() != kDtypeF32) throw FormatError("unsupported adapter dtype in " + path);
    r.u8();
    r.u8();
    r.u8();
    LoraAdapter<float> adapter;
    adapter.config.rank = int(r.u32());
    adapter.config.alpha = r.f64();
    adapter.config.target_patterns.clear();
    const uint32_t n_patterns = r.u32();
    for (uint32_t i = 0; i < n_patterns; ++i) adapter.config.target_patterns.push_back(r.str());
    const uint32_t n_layers = r.u32();
    for (uint32_t i = 0; i < n_layers; ++i) {
        LoraLayer<float> l;
        l.path = r.str();
        l.d_in = int(r.u32());
        l.d_out = int(r.u32());
        l.base_fingerprint = r.u64();
        l.A = r.mat();
        l.B = r.mat();
        if (l.A.rows() != adapter.config.rank || l.A.cols() != l.d_in ||
            l.B.rows() != l.d_out || l.B.cols() != adapter.config.rank) {
            throw FormatError("inconsistent adapter tensor shapes at " + l.path);
        }
        adapter.layers.push_back(std::move(l));
    }
    adapter.config.validate();
    return adapter;
}

void save_weights(const ParamStore<float>& params, const std::string& path) {
    Writer w;
    w.bytes("EPWT", 4);
    w.u32(kWeightsVersion);
    w.u8(kDtypeF32);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u32(uint32_t(params.items.size()));
    for (const auto& [name, m] : params.items) {
        w.str(name);
        w.mat(m);
    }
    w.finish(path);
}

void load_weights(ParamStore<float>& params, const std::string& path) {
    Reader r(path);
    r.expect_magic("EPWT");
    if (r.u32() != kWeightsVersion) throw FormatError("unsupported weights version in " + path);
    if (r.u8() != kDtypeF32) throw FormatError("unsupported weights dtype in " + path);
    r.u8();
    r.u8();
    r.u8();
    const uint32_t n = r.u32();
    if (n != params.items.size()) {
        throw FormatError("weights file has " + std::to_string(n) + " tensors, model expects " +
                          std::to_string(params.items.size()));
    }
    for (uint32_t i = 0; i < n; ++i) {
        const std::string name = r.str();
        Mat<float> m = r.mat();
        Mat<float>* dst = params.find(name);
        if (!dst) throw FormatError("unknown tensor in weights file: " + name);
        if (dst->rows() != m.rows() || dst->cols() != m.cols()) {
            throw FormatError("tensor shape mismatch for " + name);
        }
        *dst = std::move(m);
    }
}

} // namespace editprop
