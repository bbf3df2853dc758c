#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "reeflora/autodiff.hpp"
#include "reeflora/rng.hpp"
#include "reeflora/tensor.hpp"

namespace reeflora {

// Projections a low-rank branch can be attached to. "mlp" covers both MLP
// matrices of a block.
enum class LoraTarget { query, key, value, output, mlp };

const char* lora_target_name(LoraTarget t);
LoraTarget lora_target_from_name(const std::string& name);  // ConfigError if unknown

struct LoraConfig {
    int rank = 24;
    // Scaling numerator; negative means "equal to rank", which reproduces the
    // unscaled low-rank update exactly.
    double alpha = -1.0;
    std::set<LoraTarget> targets = {LoraTarget::query, LoraTarget::value};

    double effective_alpha() const { return alpha < 0.0 ? static_cast<double>(rank) : alpha; }
    double scaling() const {
        return rank > 0 ? effective_alpha() / static_cast<double>(rank) : 0.0;
    }
    bool has_target(LoraTarget t) const { return targets.count(t) > 0; }

    std::string targets_string() const;                       // "query,value"
    static std::set<LoraTarget> parse_targets(const std::string& csv);

    void validate() const;  // rank >= 0, alpha > 0 or auto, targets non-empty when rank > 0
};

// A frozen d x k linear layer with a trainable low-rank update. Forward is
// h = W0 x + (alpha / r) * B A x + bias, with gradients reaching A and B only.
template <typename T>
struct LoraLinear {
    NodePtr<T> w0;    // d x k, frozen
    NodePtr<T> bias;  // d, frozen; may be null
    NodePtr<T> a;     // r x k, trainable
    NodePtr<T> b;     // d x r, trainable, zero at init
    double alpha = 0.0;
    int rank = 0;

    T scaling() const { return static_cast<T>(alpha / static_cast<double>(rank)); }

    std::int64_t out_dim() const { return w0->value.shape[0]; }
    std::int64_t in_dim() const { return w0->value.shape[1]; }

    // x: N x k rows -> N x d rows.
    NodePtr<T> forward(const NodePtr<T>& x) const {
        auto base = linear(x, w0, bias);
        auto update = linear(linear(x, a), b);
        return add(base, scale(update, scaling()));
    }

    // Single-vector convenience: k -> d.
    Tensor<T> forward_vector(const Tensor<T>& x) const {
        if (x.rank() != 1 || x.shape[0] != in_dim()) {
            throw DimensionError("lora forward input shape " + shape_str(x.shape) +
                                 " does not match weight " + shape_str(w0->value.shape));
        }
        auto xs = make_leaf(Tensor<T>({1, in_dim()}, x.data));
        Tensor<T> out = forward(xs)->value;
        return Tensor<T>({out_dim()}, out.data);
    }

    // W_eff = W0 + (alpha / r) * B A. A plain linear layer with W_eff matches
    // the adapter forward.
    Tensor<T> merge_weights() const {
        const bool b_zero =
            std::all_of(b->value.data.begin(), b->value.data.end(), [](T v) { return v == T(0); });
        if (b_zero) return w0->value;
        Tensor<T> delta = gemm_nn(b->value, a->value);
        Tensor<T> merged = w0->value;
        const T s = scaling();
        for (std::size_t i = 0; i < merged.data.size(); ++i) merged.data[i] += s * delta.data[i];
        return merged;
    }
};

// Attach adapters to existing weight/bias leaves. A is Gaussian(0, 0.02^2),
// B is zero so the wrapped layer initially computes exactly the base layer.
// The base leaves are marked frozen here.
template <typename T>
LoraLinear<T> attach_lora(const NodePtr<T>& w0, const NodePtr<T>& bias, const NodePtr<T>& a,
                          const NodePtr<T>& b, int rank, double alpha) {
    LoraLinear<T> layer;
    layer.w0 = w0;
    layer.bias = bias;
    layer.a = a;
    layer.b = b;
    layer.rank = rank;
    layer.alpha = alpha;
    return layer;
}

template <typename T>
void fill_gaussian(Tensor<T>& t, Pcg32& rng, double sigma) {
    for (auto& v : t.data) v = static_cast<T>(rng.next_gaussian() * sigma);
}

// Standalone constructor from a raw weight matrix (callers with r == 0 skip
// wrapping instead). Throws ConfigError when r >= min(d, k).
template <typename T>
LoraLinear<T> init_lora(const Tensor<T>& w0, const LoraConfig& config, std::uint64_t seed) {
    if (w0.rank() != 2) {
        throw DimensionError("init_lora requires a rank-2 weight, got " + shape_str(w0.shape));
    }
    if (config.rank < 1) throw ConfigError("init_lora requires rank >= 1");
    const std::int64_t d = w0.shape[0], k = w0.shape[1];
    if (config.rank >= std::min(d, k)) {
        throw ConfigError("lora rank " + std::to_string(config.rank) +
                          " must be < min(d, k) = " + std::to_string(std::min(d, k)));
    }
    auto w0_leaf = make_leaf(w0, /*requires_grad=*/false);
    Tensor<T> a_init({config.rank, k});
    Pcg32 rng(seed, /*stream=*/0);
    fill_gaussian(a_init, rng, 0.02);
    auto a_leaf = make_leaf(std::move(a_init), /*requires_grad=*/true);
    auto b_leaf = make_leaf(Tensor<T>({d, config.rank}), /*requires_grad=*/true);
    return attach_lora<T>(w0_leaf, nullptr, a_leaf, b_leaf, config.rank,
                          config.effective_alpha());
}

}  // namespace reeflora
