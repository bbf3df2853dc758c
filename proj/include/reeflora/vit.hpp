#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "reeflora/autodiff.hpp"
#include "reeflora/lora.hpp"
#include "reeflora/rng.hpp"
#include "reeflora/tensor.hpp"

namespace reeflora {

struct ModelConfig {
    int image_size = 512;
    int patch_size = 16;
    int channels = 3;
    int embed_dim = 128;
    int depth = 4;
    int heads = 4;
    double mlp_ratio = 4.0;
    int num_classes = 8;

    int grid() const { return image_size / patch_size; }
    int num_tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int head_dim() const { return embed_dim / heads; }
    int mlp_hidden() const { return static_cast<int>(std::llround(embed_dim * mlp_ratio)); }

    void validate() const {
        if (image_size <= 0 || patch_size <= 0 || channels <= 0 || embed_dim <= 0 || depth <= 0 ||
            heads <= 0 || num_classes < 1) {
            throw ConfigError("model config fields must be positive");
        }
        if (image_size % patch_size != 0) {
            throw ConfigError("image_size " + std::to_string(image_size) +
                              " not divisible by patch_size " + std::to_string(patch_size));
        }
        if (embed_dim % heads != 0) {
            throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                              " not divisible by heads " + std::to_string(heads));
        }
        if (mlp_ratio <= 0.0) throw ConfigError("mlp_ratio must be positive");
    }
};

// Named parameter leaves in a fixed construction order. The entry index
// doubles as the PCG stream id for that tensor's initialisation, so adding
// tensors later (adapters) never perturbs earlier draws.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        NodePtr<T> node;
        bool frozen = false;
    };

    enum class Init { zeros, ones, trunc_normal_002, gaussian_002 };

    NodePtr<T> add(const std::string& name, Shape shape, Init init, std::uint64_t seed,
                   bool frozen = false) {
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        Tensor<T> value(shape);
        Pcg32 rng(seed, static_cast<std::uint64_t>(entries_.size()));
        switch (init) {
            case Init::zeros: break;
            case Init::ones: std::fill(value.data.begin(), value.data.end(), T(1)); break;
            case Init::trunc_normal_002:
                for (auto& v : value.data) v = static_cast<T>(rng.next_truncated_normal(0.02));
                break;
            case Init::gaussian_002:
                for (auto& v : value.data) v = static_cast<T>(rng.next_gaussian() * 0.02);
                break;
        }
        auto node = make_leaf(std::move(value), !frozen);
        index_[name] = entries_.size();
        entries_.push_back({name, node, frozen});
        return node;
    }

    const NodePtr<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return entries_[it->second].node;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    void set_frozen(const std::string& name, bool frozen) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        Entry& e = entries_[it->second];
        e.frozen = frozen;
        e.node->requires_grad = !frozen;
        e.node->needs_grad = !frozen;
        if (frozen) e.node->zero_grad();
    }

    const std::vector<Entry>& entries() const { return entries_; }

    std::vector<Entry> trainable() const {
        std::vector<Entry> out;
        for (const auto& e : entries_)
            if (!e.frozen) out.push_back(e);
        return out;
    }

    void zero_grads() {
        for (auto& e : entries_) e.node->zero_grad();
    }

    long long count_params(bool frozen_only) const {
        long long n = 0;
        for (const auto& e : entries_)
            if (e.frozen == frozen_only) n += e.node->value.size();
        return n;
    }

    // FNV-1a over the raw bytes of every entry matching the predicate, in
    // store order, mixing in the names.
    std::uint64_t hash_values(bool frozen_only) const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* bytes = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        };
        for (const auto& e : entries_) {
            if (e.frozen != frozen_only) continue;
            mix(e.name.data(), e.name.size());
            mix(e.node->value.data.data(), e.node->value.data.size() * sizeof(T));
        }
        return h;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// --------------------------------------------------------------------------
// Patchify: H x W x C raster tensor -> (H/P * W/P) x (P*P*C) token matrix.
// Tokens are row-major over the patch grid; within a token the flattening
// order is (row, col, channel), matching the raster's own layout.
// --------------------------------------------------------------------------
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, int patch_size) {
    if (image.rank() != 3) {
        throw GeometryError("patchify expects an H x W x C tensor, got " + shape_str(image.shape));
    }
    const std::int64_t h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if (patch_size <= 0 || h % patch_size != 0 || w % patch_size != 0) {
        throw GeometryError("image " + std::to_string(h) + "x" + std::to_string(w) +
                            " not divisible by patch size " + std::to_string(patch_size));
    }
    const std::int64_t gy = h / patch_size, gx = w / patch_size;
    const std::int64_t token_dim = static_cast<std::int64_t>(patch_size) * patch_size * c;
    Tensor<T> tokens({gy * gx, token_dim});
    for (std::int64_t ty = 0; ty < gy; ++ty) {
        for (std::int64_t tx = 0; tx < gx; ++tx) {
            T* dst = tokens.data.data() + (ty * gx + tx) * token_dim;
            for (std::int64_t py = 0; py < patch_size; ++py) {
                const T* src = image.data.data() + ((ty * patch_size + py) * w + tx * patch_size) * c;
                std::copy_n(src, static_cast<std::size_t>(patch_size * c), dst);
                dst += patch_size * c;
            }
        }
    }
    return tokens;
}

// --------------------------------------------------------------------------
// Backbone construction. Weight matrices and the class token start as
// truncated normal (sigma 0.02, cut at 2 sigma); biases, positional
// embeddings and norm shifts start at zero; norm scales at one.
// --------------------------------------------------------------------------
template <typename T>
void init_backbone(ParamStore<T>& store, const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    using Init = typename ParamStore<T>::Init;
    const std::int64_t e = cfg.embed_dim;
    store.add("patch_proj.weight", {e, cfg.patch_dim()}, Init::trunc_normal_002, seed);
    store.add("patch_proj.bias", {e}, Init::zeros, seed);
    store.add("cls_token", {1, e}, Init::trunc_normal_002, seed);
    store.add("pos_embed", {1 + cfg.num_tokens(), e}, Init::zeros, seed);
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        store.add(b + "ln1.gamma", {e}, Init::ones, seed);
        store.add(b + "ln1.beta", {e}, Init::zeros, seed);
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            store.add(b + "attn." + w + ".weight", {e, e}, Init::trunc_normal_002, seed);
            store.add(b + "attn." + w + ".bias", {e}, Init::zeros, seed);
        }
        store.add(b + "ln2.gamma", {e}, Init::ones, seed);
        store.add(b + "ln2.beta", {e}, Init::zeros, seed);
        store.add(b + "mlp.fc1.weight", {cfg.mlp_hidden(), e}, Init::trunc_normal_002, seed);
        store.add(b + "mlp.fc1.bias", {cfg.mlp_hidden()}, Init::zeros, seed);
        store.add(b + "mlp.fc2.weight", {e, cfg.mlp_hidden()}, Init::trunc_normal_002, seed);
        store.add(b + "mlp.fc2.bias", {e}, Init::zeros, seed);
    }
    store.add("final_norm.gamma", {e}, Init::ones, seed);
    store.add("final_norm.beta", {e}, Init::zeros, seed);
}

// Linear layers that carry a low-rank branch, keyed by the weight's base
// name (e.g. "blocks.0.attn.wq").
template <typename T>
using WrappedLinears = std::unordered_map<std::string, LoraLinear<T>>;

template <typename T>
struct BackboneTrace {
    NodePtr<T> feature;     // 1 x embed_dim, class-token row after the final norm
    NodePtr<T> tokens_out;  // (1 + num_tokens) x embed_dim, last block output
    std::vector<NodePtr<T>> attention;  // one softmax node per (block, head)
};

namespace detail {

template <typename T>
NodePtr<T> apply_linear(const ParamStore<T>& store, const WrappedLinears<T>& wrapped,
                        const std::string& base, const NodePtr<T>& x) {
    auto it = wrapped.find(base);
    if (it != wrapped.end()) return it->second.forward(x);
    return linear(x, store.at(base + ".weight"), store.at(base + ".bias"));
}

}  // namespace detail

// Pre-norm encoder: patchify -> project -> prepend class token -> add
// positional embeddings -> depth x (LN, MHSA, residual; LN, MLP, residual)
// -> final LN -> class-token row.
template <typename T>
BackboneTrace<T> backbone_forward(const ParamStore<T>& store, const ModelConfig& cfg,
                                  const Tensor<T>& image,
                                  const WrappedLinears<T>& wrapped = {}) {
    if (image.rank() != 3 || image.shape[0] != cfg.image_size ||
        image.shape[1] != cfg.image_size || image.shape[2] != cfg.channels) {
        throw GeometryError("image shape " + shape_str(image.shape) +
                            " does not match model geometry " + std::to_string(cfg.image_size) +
                            "x" + std::to_string(cfg.image_size) + "x" +
                            std::to_string(cfg.channels));
    }
    BackboneTrace<T> trace;
    auto tokens = make_leaf(patchify(image, cfg.patch_size));
    auto x = linear(tokens, store.at("patch_proj.weight"), store.at("patch_proj.bias"));
    x = concat_rows<T>({store.at("cls_token"), x});
    x = add(x, store.at("pos_embed"));

    const int dh = cfg.head_dim();
    const T attn_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        auto h = layer_norm(x, store.at(b + "ln1.gamma"), store.at(b + "ln1.beta"));
        auto q = detail::apply_linear(store, wrapped, b + "attn.wq", h);
        auto k = detail::apply_linear(store, wrapped, b + "attn.wk", h);
        auto v = detail::apply_linear(store, wrapped, b + "attn.wv", h);
        std::vector<NodePtr<T>> head_outs;
        head_outs.reserve(static_cast<std::size_t>(cfg.heads));
        for (int hh = 0; hh < cfg.heads; ++hh) {
            auto qh = slice_cols(q, hh * dh, dh);
            auto kh = slice_cols(k, hh * dh, dh);
            auto vh = slice_cols(v, hh * dh, dh);
            auto att = softmax_rows(scale(matmul(qh, transpose(kh)), attn_scale));
            trace.attention.push_back(att);
            head_outs.push_back(matmul(att, vh));
        }
        auto o = cfg.heads > 1 ? concat_cols(head_outs) : head_outs[0];
        x = add(x, detail::apply_linear(store, wrapped, b + "attn.wo", o));
        auto m = layer_norm(x, store.at(b + "ln2.gamma"), store.at(b + "ln2.beta"));
        auto mid = gelu(detail::apply_linear(store, wrapped, b + "mlp.fc1", m));
        x = add(x, detail::apply_linear(store, wrapped, b + "mlp.fc2", mid));
    }
    trace.tokens_out = x;
    auto normed = layer_norm(x, store.at("final_norm.gamma"), store.at("final_norm.beta"));
    trace.feature = slice_rows(normed, 0, 1);
    return trace;
}

}  // namespace reeflora
