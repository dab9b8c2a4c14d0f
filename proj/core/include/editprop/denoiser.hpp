#pragma once

#include "editprop/autodiff.hpp"
#include "editprop/conditioning.hpp"
#include "editprop/lora.hpp"
#include "editprop/rng.hpp"
#include "editprop/schedule.hpp"
#include "editprop/tensor.hpp"
#include "editprop/tokenizer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace editprop {

struct DenoiserDims {
    int latent_channels = 12;
    int model_dim = 128;
    int heads = 4;
    int blocks = 2;
    int mlp_hidden = 256;
    int vocab_size = ToyTokenizer::kHashBuckets + 1;
};

struct LinearLayerInfo {
    std::string path;
    int d_in = 0;
    int d_out = 0;
};

// Named, ordered parameter set. Order is fixed at construction and defines
// the layout of the persisted weights file.
template <typename S>
struct ParamStore {
    std::vector<std::pair<std::string, Mat<S>>> items;

    Mat<S>& add(const std::string& name, int rows, int cols) {
        items.emplace_back(name, Mat<S>::Zero(rows, cols));
        return items.back().second;
    }

    Mat<S>* find(const std::string& name) {
        for (auto& [k, v] : items)
            if (k == name) return &v;
        return nullptr;
    }
    const Mat<S>* find(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return &v;
        return nullptr;
    }

    Mat<S>& require(const std::string& name) {
        if (auto* m = find(name)) return *m;
        throw ConfigError("unknown parameter: " + name);
    }
    const Mat<S>& require(const std::string& name) const {
        if (const auto* m = find(name)) return *m;
        throw ConfigError("unknown parameter: " + name);
    }
};

// Sinusoidal embedding of a scalar position into `dim` values (dim even).
template <typename S>
void sinusoidal_embed(double pos, int dim, S* out) {
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * double(k) / double(half));
        out[2 * k] = S(std::sin(pos * freq));
        out[2 * k + 1] = S(std::cos(pos * freq));
    }
}

namespace detail {
// Per-layer LoRA nodes surfaced by a taped forward so the trainer can read
// gradients after backward.
template <typename S>
struct LoraNodeRefs {
    std::size_t layer_index;
    ad::NodeP<S> a;
    ad::NodeP<S> b;
};
} // namespace detail

// Small diffusion transformer over flattened latent tokens: per block a
// self-attention, a cross-attention to prompt tokens, and an MLP. The
// condition enters by channel-concatenating the masked latent video and the
// latent mask onto x_t ahead of the input projection.
template <typename S>
class ToyDenoiser {
public:
    ToyDenoiser(DenoiserDims dims, NoiseSchedule schedule, uint64_t seed)
        : dims_(dims), schedule_(std::move(schedule)) {
        build_params(seed);
    }

    const DenoiserDims& dims() const { return dims_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    int input_channels() const { return 2 * dims_.latent_channels + 1; }

    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    // Every linear layer, in a stable order with stable path names.
    const std::vector<LinearLayerInfo>& linear_layers() const { return layers_; }

    void attach(const LoraAdapter<S>* adapter) { adapter_ = adapter; }
    const LoraAdapter<S>* attached() const { return adapter_; }

    // Inference forward. Skips adapter deltas whose B factor is still all
    // zero, so a freshly injected adapter reproduces the base model output
    // bit for bit.
    Array4<S> predict(const Array4<S>& x_t, int t, const ConditioningBundle<S>& cond) const {
        ad::Graph<S> g;
        auto pred = forward_tokens(g, x_t, t, cond, /*train=*/false, nullptr);
        return from_tokens<S>(pred->val, x_t.t, x_t.h, x_t.w);
    }

    struct TapedLoss {
        ad::NodeP<S> loss;
        std::vector<detail::LoraNodeRefs<S>> lora_nodes;
    };

    // Training forward: builds the full tape and the MSE loss against
    // `target`, exposing the adapter's parameter nodes.
    TapedLoss build_loss(ad::Graph<S>& g, const Array4<S>& x_t, int t,
                         const ConditioningBundle<S>& cond, const Array4<S>& target) const {
        require_same_shape(x_t, target, "build_loss");
        std::vector<detail::LoraNodeRefs<S>> refs;
        auto pred = forward_tokens(g, x_t, t, cond, /*train=*/true, &refs);
        TapedLoss out;
        out.loss = g.mean_sq_err(pred, to_tokens(target));
        out.lora_nodes = std::move(refs);
        return out;
    }

private:
    void register_linear(const std::string& path, int d_in, int d_out, Rng rng,
                         double weight_scale = 1.0) {
        Mat<S>& w = params_.add(path + ".weight", d_out, d_in);
        const double bound = weight_scale / std::sqrt(double(d_in));
        for (std::ptrdiff_t i = 0; i < w.size(); ++i) {
            w.data()[i] = S(rng.uniform(-bound, bound));
        }
        params_.add(path + ".bias", 1, d_out);
        layers_.push_back({path, d_in, d_out});
    }

    void build_params(uint64_t seed) {
        Rng master(seed);
        const int d = dims_.model_dim;

        Mat<S>& embed = params_.add("token_embed.weight", dims_.vocab_size, d);
        {
            Rng r = master.fork(1);
            for (std::ptrdiff_t i = 0; i < embed.size(); ++i) {
                embed.data()[i] = S(0.02 * r.normal());
            }
        }

        register_linear("input_proj", input_channels(), d, master.fork(2));
        register_linear("time_mlp.fc1", d, d, master.fork(3));
        register_linear("time_mlp.fc2", d, d, master.fork(4));
        for (int b = 0; b < dims_.blocks; ++b) {
            const std::string prefix = "blocks." + std::to_string(b) + ".";
            add_layer_norm(prefix + "ln1");
            register_linear(prefix + "self_attn.q_proj", d, d, master.fork(10 + 10 * b));
            register_linear(prefix + "self_attn.k_proj", d, d, master.fork(11 + 10 * b));
            register_linear(prefix + "self_attn.v_proj", d, d, master.fork(12 + 10 * b));
            register_linear(prefix + "self_attn.out_proj", d, d, master.fork(13 + 10 * b));
            add_layer_norm(prefix + "ln2");
            register_linear(prefix + "cross_attn.q_proj", d, d, master.fork(14 + 10 * b));
            register_linear(prefix + "cross_attn.k_proj", d, d, master.fork(15 + 10 * b));
            register_linear(prefix + "cross_attn.v_proj", d, d, master.fork(16 + 10 * b));
            register_linear(prefix + "cross_attn.out_proj", d, d, master.fork(17 + 10 * b));
            add_layer_norm(prefix + "ln3");
            register_linear(prefix + "mlp.fc1", d, dims_.mlp_hidden, master.fork(18 + 10 * b));
            register_linear(prefix + "mlp.fc2", dims_.mlp_hidden, d, master.fork(19 + 10 * b));
        }
        add_layer_norm("final_ln");
        register_linear("output_proj", d, dims_.latent_channels, master.fork(99));
    }

    void add_layer_norm(const std::string& path) {
        Mat<S>& gamma = params_.add(path + ".gamma", 1, dims_.model_dim);
        gamma.setOnes();
        params_.add(path + ".beta", 1, dims_.model_dim);
    }

    // Shared linear-with-optional-LoRA builder.
    ad::NodeP<S> linear(ad::Graph<S>& g, ad::NodeP<S> x, const std::string& path, bool train,
                        std::vector<detail::LoraNodeRefs<S>>* refs) const;

    ad::NodeP<S> attention(ad::Graph<S>& g, ad::NodeP<S> queries_in, ad::NodeP<S> kv_in,
                           const std::string& prefix, bool train,
                           std::vector<detail::LoraNodeRefs<S>>* refs) const {
        auto q = linear(g, queries_in, prefix + ".q_proj", train, refs);
        auto k = linear(g, kv_in, prefix + ".k_proj", train, refs);
        auto v = linear(g, kv_in, prefix + ".v_proj", train, refs);
        const int dh = dims_.model_dim / dims_.heads;
        const S inv_sqrt_dh = S(1.0 / std::sqrt(double(dh)));
        std::vector<ad::NodeP<S>> heads;
        heads.reserve(std::size_t(dims_.heads));
        for (int h = 0; h < dims_.heads; ++h) {
            auto qh = g.slice_cols(q, h * dh, dh);
            auto kh = g.slice_cols(k, h * dh, dh);
            auto vh = g.slice_cols(v, h * dh, dh);
            auto probs = g.attn_probs(qh, kh, inv_sqrt_dh);
            heads.push_back(g.matmul(probs, vh));
        }
        return linear(g, g.concat_cols(heads), prefix + ".out_proj", train, refs);
    }

    ad::NodeP<S> norm(ad::Graph<S>& g, ad::NodeP<S> x, const std::string& path) const {
        return g.layer_norm(x, params_.require(path + ".gamma"), params_.require(path + ".beta"));
    }

    Mat<S> time_features(int t) const;
    Mat<S> latent_positions(int lt, int lh, int lw) const;
    Mat<S> prompt_embedding(const std::vector<int32_t>& ids) const;

    ad::NodeP<S> forward_tokens(ad::Graph<S>& g, const Array4<S>& x_t, int t,
                                const ConditioningBundle<S>& cond, bool train,
                                std::vector<detail::LoraNodeRefs<S>>* refs) const;

    DenoiserDims dims_;
    NoiseSchedule schedule_;
    ParamStore<S> params_;
    std::vector<LinearLayerInfo> layers_;
    const LoraAdapter<S>* adapter_ = nullptr;
};

template <typename S>
ad::NodeP<S> ToyDenoiser<S>::linear(ad::Graph<S>& g, ad::NodeP<S> x, const std::string& path,
                                    bool train, std::vector<detail::LoraNodeRefs<S>>* refs) const {
    auto w = g.constant(params_.require(path + ".weight"));
    auto y = g.add_row(g.matmul_nt(x, w), g.constant(params_.require(path + ".bias")));
    if (adapter_ == nullptr) return y;
    const auto layer_index = adapter_->find_index(path);
    if (layer_index == std::size_t(-1)) return y;
    const LoraLayer<S>& layer = adapter_->layers[layer_index];
    if (!train && layer.B.isZero(S(0))) return y;
    auto a = train ? g.leaf(layer.A) : g.constant(layer.A);
    auto b = train ? g.leaf(layer.B) : g.constant(layer.B);
    if (refs) refs->push_back({layer_index, a, b});
    auto delta = g.matmul_nt(g.matmul_nt(x, a), b);
    return g.add(y, g.scale(delta, S(adapter_->scaling())));
}

template <typename S>
Mat<S> ToyDenoiser<S>::time_features(int t) const {
    const int d = dims_.model_dim;
    Mat<S> f = Mat<S>::Zero(1, d);
    sinusoidal_embed(double(t), d - 2, f.data());
    f(0, d - 2) = S(schedule_.signal_coef(t));
    f(0, d - 1) = S(schedule_.noise_coef(t));
    return f;
}

template <typename S>
Mat<S> ToyDenoiser<S>::latent_positions(int lt, int lh, int lw) const {
    const int d = dims_.model_dim;
    int d_axis = d / 3;
    if (d_axis % 2 != 0) --d_axis;
    const int d_time = d - 2 * d_axis;
    Mat<S> pos(std::ptrdiff_t(lt) * lh * lw, d);
    std::vector<S> buf(static_cast<std::size_t>(d));
    for (int ti = 0; ti < lt; ++ti) {
        for (int yi = 0; yi < lh; ++yi) {
            for (int xi = 0; xi < lw; ++xi) {
                sinusoidal_embed(double(ti), d_time, buf.data());
                sinusoidal_embed(double(yi), d_axis, buf.data() + d_time);
                sinusoidal_embed(double(xi), d_axis, buf.data() + d_time + d_axis);
                const std::ptrdiff_t row = (std::ptrdiff_t(ti) * lh + yi) * lw + xi;
                for (int j = 0; j < d; ++j) pos(row, j) = buf[std::size_t(j)];
            }
        }
    }
    return pos;
}

template <typename S>
Mat<S> ToyDenoiser<S>::prompt_embedding(const std::vector<int32_t>& ids) const {
    const Mat<S>& table = params_.require("token_embed.weight");
    const int d = dims_.model_dim;
    Mat<S> e(std::ptrdiff_t(ids.size()), d);
    std::vector<S> buf(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= dims_.vocab_size) {
            throw ShapeError("prompt token id out of range: " + std::to_string(ids[i]));
        }
        sinusoidal_embed(double(i), d, buf.data());
        for (int j = 0; j < d; ++j) e(std::ptrdiff_t(i), j) = table(ids[i], j) + buf[std::size_t(j)];
    }
    return e;
}

template <typename S>
ad::NodeP<S> ToyDenoiser<S>::forward_tokens(ad::Graph<S>& g, const Array4<S>& x_t, int t,
                                            const ConditioningBundle<S>& cond, bool train,
                                            std::vector<detail::LoraNodeRefs<S>>* refs) const {
    if (x_t.c != dims_.latent_channels) {
        throw ShapeError("latent has " + std::to_string(x_t.c) + " channels, model expects " +
                         std::to_string(dims_.latent_channels));
    }
    require_same_shape(x_t, cond.cond_latent, "denoiser conditioning");
    if (cond.mask.t != x_t.t || cond.mask.h != x_t.h || cond.mask.w != x_t.w) {
        throw ShapeError("latent mask does not match latent grid");
    }
    if (cond.prompt_tokens.empty()) throw ShapeError("prompt tokens must be non-empty");
    schedule_.check_step(t);

    const std::ptrdiff_t n = std::ptrdiff_t(x_t.t) * x_t.h * x_t.w;
    Mat<S> x_tokens = to_tokens(x_t);
    Mat<S> x0(n, input_channels());
    x0.middleCols(0, x_t.c) = x_tokens;
    x0.middleCols(x_t.c, x_t.c) = to_tokens(cond.cond_latent);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        x0(i, 2 * x_t.c) = S(cond.mask.data[std::size_t(i)]);
    }

    auto h = linear(g, g.constant(std::move(x0)), "input_proj", train, refs);
    h = g.add(h, g.constant(latent_positions(x_t.t, x_t.h, x_t.w)));
    auto te = linear(g, g.gelu(linear(g, g.constant(time_features(t)), "time_mlp.fc1", train, refs)),
                     "time_mlp.fc2", train, refs);
    h = g.add_row(h, te);

    auto prompt = g.constant(prompt_embedding(cond.prompt_tokens));

    for (int b = 0; b < dims_.blocks; ++b) {
        const std::string prefix = "blocks." + std::to_string(b);
        auto normed = norm(g, h, prefix + ".ln1");
        auto sa = attention(g, normed, normed, prefix + ".self_attn", train, refs);
        h = g.add(h, sa);
        auto ca = attention(g, norm(g, h, prefix + ".ln2"), prompt, prefix + ".cross_attn", train,
                            refs);
        h = g.add(h, ca);
        auto m1 = linear(g, norm(g, h, prefix + ".ln3"), prefix + ".mlp.fc1", train, refs);
        auto m2 = linear(g, g.gelu(m1), prefix + ".mlp.fc2", train, refs);
        h = g.add(h, m2);
    }

    // Residual head: the network predicts a correction on top of x_t, which
    // already matches the target at the high-noise end of the schedule.
    auto correction = linear(g, norm(g, h, "final_ln"), "output_proj", train, refs);
    return g.add(correction, g.constant(std::move(x_tokens)));
}

// Creates a fresh adapter for every layer matched by the config patterns.
// B starts at zero, so the adapted model is the base model until trained.
// The adapter is returned detached; call denoiser.attach(&adapter) to use it.
template <typename S>
LoraAdapter<S> inject(const ToyDenoiser<S>& denoiser, const LoraConfig& cfg) {
    cfg.validate();
    LoraAdapter<S> adapter;
    adapter.config = cfg;
    Rng master(mix_seed(cfg.init_seed, 0x6c6f7261));
    for (const auto& info : denoiser.linear_layers()) {
        bool matched = false;
        for (const auto& pat : cfg.target_patterns) {
            if (glob_match(pat, info.path)) {
                matched = true;
                break;
            }
        }
        if (!matched) continue;
        if (cfg.rank > std::min(info.d_in, info.d_out)) {
            throw ConfigError("LoRA rank " + std::to_string(cfg.rank) + " exceeds layer " +
                              info.path + " dims " + std::to_string(info.d_in) + "x" +
                              std::to_string(info.d_out));
        }
        LoraLayer<S> layer;
        layer.path = info.path;
        layer.d_in = info.d_in;
        layer.d_out = info.d_out;
        layer.A = Mat<S>(cfg.rank, info.d_in);
        Rng r = master.fork(adapter.layers.size() + 1);
        const double bound = 1.0 / std::sqrt(double(info.d_in));
        for (std::ptrdiff_t i = 0; i < layer.A.size(); ++i) {
            layer.A.data()[i] = S(r.uniform(-bound, bound));
        }
        layer.B = Mat<S>::Zero(info.d_out, cfg.rank);
        layer.base_fingerprint =
            fingerprint(denoiser.params().require(info.path + ".weight"));
        adapter.layers.push_back(std::move(layer));
    }
    if (adapter.layers.empty()) {
        throw ConfigError("no layers match the LoRA target patterns");
    }
    return adapter;
}

// Folds the adapter into the base weights: W ← W + (alpha/r)·B·A. The
// adapter must have been created against these exact weights. Detaches any
// attached adapter so the delta is not applied twice.
template <typename S>
void merge(ToyDenoiser<S>& denoiser, const LoraAdapter<S>& adapter) {
    for (const auto& l : adapter.layers) {
        const Mat<S>& w = denoiser.params().require(l.path + ".weight");
        if (fingerprint(w) != l.base_fingerprint) {
            throw ConfigError("adapter fingerprint mismatch at " + l.path +
                              ": adapter was trained against different base weights");
        }
    }
    for (const auto& l : adapter.layers) {
        Mat<S>& w = denoiser.params().require(l.path + ".weight");
        w.noalias() += Mat<S>(l.B * l.A) * S(adapter.scaling());
    }
    denoiser.attach(nullptr);
}

template <typename S>
void unmerge(ToyDenoiser<S>& denoiser, const LoraAdapter<S>& adapter) {
    for (const auto& l : adapter.layers) {
        Mat<S>& w = denoiser.params().require(l.path + ".weight");
        w.noalias() -= Mat<S>(l.B * l.A) * S(adapter.scaling());
    }
}

// Full-weights file ("EPWT"): every named parameter of the model, float32,
// checksummed. Shapes and names must match the constructed model on load.
void save_weights(const ParamStore<float>& params, const std::string& path);
void load_weights(ParamStore<float>& params, const std::string& path);

} // namespace editprop
