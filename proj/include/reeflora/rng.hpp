#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace reeflora {

// PCG32 (pcg32_xsh_rr_64_32, O'Neill 2014). Chosen over std:: engines so that
// every stream of numbers is bit-identical across platforms and standard
// library implementations.
//
// Stream splitting: a generator is addressed by (seed, stream). Distinct
// stream ids select distinct increments and therefore independent sequences
// for the same seed. Parameter initialisation uses stream k for the k-th
// tensor in model construction order; the training loop uses one stream per
// epoch for shuffling.
class Pcg32 {
public:
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in (0, 1); never returns an exact endpoint.
    double next_double() {
        return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
    }

    // Uniform integer in [0, bound) without modulo bias.
    std::uint32_t next_below(std::uint32_t bound) {
        std::uint32_t threshold = static_cast<std::uint32_t>(-bound) % bound;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller (cosine branch only, one sample per pair
    // of uniforms, keeping the stream layout easy to reason about).
    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Normal(0, sigma^2) truncated to [-2 sigma, 2 sigma] by rejection.
    double next_truncated_normal(double sigma) {
        for (;;) {
            double z = next_gaussian();
            if (z >= -2.0 && z <= 2.0) return z * sigma;
        }
    }

    // Fisher-Yates; identical permutation for identical (seed, stream).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::size_t j = next_below(static_cast<std::uint32_t>(i + 1));
            std::swap(items[i], items[j]);
        }
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

}  // namespace reeflora
