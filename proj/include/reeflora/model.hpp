#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "reeflora/head.hpp"
#include "reeflora/lora.hpp"
#include "reeflora/vit.hpp"

namespace reeflora {

// Trainable/frozen parameter accounting, by layer and in total.
struct ParamBudget {
    long long trainable = 0;
    long long frozen = 0;
    struct Item {
        std::string name;
        long long trainable = 0;
        long long frozen = 0;
    };
    std::vector<Item> layers;

    long long total() const { return trainable + frozen; }

    void push(const std::string& name, long long t, long long f) {
        layers.push_back({name, t, f});
        trainable += t;
        frozen += f;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["trainable"] = trainable;
        j["frozen"] = frozen;
        j["total"] = total();
        auto items = nlohmann::ordered_json::array();
        for (const auto& l : layers) {
            items.push_back({{"name", l.name}, {"trainable", l.trainable}, {"frozen", l.frozen}});
        }
        j["layers"] = items;
        return j;
    }
};

namespace detail {

inline void for_each_wrapped_matrix(
    const ModelConfig& mcfg, const LoraConfig& lcfg,
    const std::function<void(const std::string& base, std::int64_t d, std::int64_t k)>& fn) {
    const std::int64_t e = mcfg.embed_dim;
    const std::int64_t h = mcfg.mlp_hidden();
    for (int i = 0; i < mcfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        if (lcfg.has_target(LoraTarget::query)) fn(b + "attn.wq", e, e);
        if (lcfg.has_target(LoraTarget::key)) fn(b + "attn.wk", e, e);
        if (lcfg.has_target(LoraTarget::value)) fn(b + "attn.wv", e, e);
        if (lcfg.has_target(LoraTarget::output)) fn(b + "attn.wo", e, e);
        if (lcfg.has_target(LoraTarget::mlp)) {
            fn(b + "mlp.fc1", h, e);
            fn(b + "mlp.fc2", e, h);
        }
    }
}

}  // namespace detail

// Adapter parameters per wrapped d x k matrix: d * r + r * k; the classifier
// head (embed_dim * num_classes + num_classes) is always trainable;
// everything else is frozen when rank > 0 adapters are in play. Pure
// arithmetic: nothing is allocated, so giant configurations are fine.
inline ParamBudget count_trainable(const ModelConfig& mcfg, const LoraConfig& lcfg) {
    mcfg.validate();
    lcfg.validate();
    const long long e = mcfg.embed_dim;
    const long long h = mcfg.mlp_hidden();
    const long long r = lcfg.rank;

    ParamBudget budget;
    budget.push("patch_proj", 0, e * mcfg.patch_dim() + e);
    budget.push("cls_token", 0, e);
    budget.push("pos_embed", 0, (1 + static_cast<long long>(mcfg.num_tokens())) * e);
    for (int i = 0; i < mcfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        budget.push(b + "ln1", 0, 2 * e);
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            budget.push(b + "attn." + w, 0, e * e + e);
        }
        budget.push(b + "ln2", 0, 2 * e);
        budget.push(b + "mlp.fc1", 0, h * e + h);
        budget.push(b + "mlp.fc2", 0, e * h + e);
    }
    budget.push("final_norm", 0, 2 * e);
    budget.push("head", e * mcfg.num_classes + mcfg.num_classes, 0);
    if (r > 0) {
        detail::for_each_wrapped_matrix(
            mcfg, lcfg, [&](const std::string& base, std::int64_t d, std::int64_t k) {
                if (r >= std::min(d, k)) {
                    throw ConfigError("lora rank " + std::to_string(r) + " must be < min(d, k) = " +
                                      std::to_string(std::min(d, k)) + " for layer " + base);
                }
                budget.push(base + ".lora", d * r + r * k, 0);
            });
    }
    return budget;
}

template <typename T>
struct ForwardResult {
    NodePtr<T> logits;  // 1 x num_classes
    BackboneTrace<T> trace;
};

// The full classifier: frozen ViT encoder, optional low-rank branches on the
// configured projections, trainable linear head over the class token.
template <typename T>
class MultiLabelViT {
public:
    MultiLabelViT(ModelConfig mcfg, LoraConfig lcfg, std::uint64_t seed)
        : mcfg_(mcfg), lcfg_(lcfg), seed_(seed) {
        mcfg_.validate();
        lcfg_.validate();
        using Init = typename ParamStore<T>::Init;
        init_backbone(params_, mcfg_, seed);
        params_.add("head.weight", {mcfg_.num_classes, mcfg_.embed_dim}, Init::trunc_normal_002,
                    seed);
        params_.add("head.bias", {mcfg_.num_classes}, Init::zeros, seed);

        // Backbone freezes; adapters and head stay trainable.
        for (const auto& e : params_.entries()) {
            if (e.name.rfind("head.", 0) != 0) params_.set_frozen(e.name, true);
        }
        if (lcfg_.rank > 0) {
            detail::for_each_wrapped_matrix(
                mcfg_, lcfg_, [&](const std::string& base, std::int64_t d, std::int64_t k) {
                    if (lcfg_.rank >= std::min(d, k)) {
                        throw ConfigError("lora rank " + std::to_string(lcfg_.rank) +
                                          " must be < min(d, k) = " +
                                          std::to_string(std::min(d, k)) + " for layer " + base);
                    }
                    auto a = params_.add(base + ".lora_a", {lcfg_.rank, k}, Init::gaussian_002,
                                         seed);
                    auto b = params_.add(base + ".lora_b", {d, lcfg_.rank}, Init::zeros, seed);
                    wrapped_[base] = attach_lora<T>(params_.at(base + ".weight"),
                                                    params_.at(base + ".bias"), a, b, lcfg_.rank,
                                                    lcfg_.effective_alpha());
                });
        }
    }

    ForwardResult<T> forward(const Tensor<T>& image) const {
        ForwardResult<T> out;
        out.trace = backbone_forward(params_, mcfg_, image, wrapped_);
        out.logits = linear(out.trace.feature, params_.at("head.weight"), params_.at("head.bias"));
        return out;
    }

    // Plain probabilities for one image (no gradients kept by the caller).
    Tensor<T> probabilities(const Tensor<T>& image) const {
        auto logits = forward(image).logits;
        Tensor<T> p = sigmoid(logits)->value;
        return Tensor<T>({p.shape[1]}, p.data);
    }

    const ModelConfig& model_config() const { return mcfg_; }
    const LoraConfig& lora_config() const { return lcfg_; }
    std::uint64_t seed() const { return seed_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const WrappedLinears<T>& wrapped() const { return wrapped_; }

private:
    ModelConfig mcfg_;
    LoraConfig lcfg_;
    std::uint64_t seed_ = 0;
    ParamStore<T> params_;
    WrappedLinears<T> wrapped_;
};

}  // namespace reeflora
