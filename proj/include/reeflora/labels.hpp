#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reeflora/errors.hpp"

namespace reeflora {

// Fixed class order used everywhere: reports, manifests, head outputs.
inline constexpr int kNumClasses = 8;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {
    "HLC",  // Healthy Coral
    "CPC",  // Compromised Coral
    "DDC",  // Dead Coral
    "RBL",  // Rubble
    "CPT",  // Competition
    "DSE",  // Disease
    "PRD",  // Predation
    "PHY",  // Physical Issues
};

// Case-insensitive lookup of a class abbreviation; -1 if unknown.
int class_index(const std::string& name);

// One 8-bit multi-label assignment. Any combination is legal, including the
// empty set.
struct LabelVector {
    std::array<std::uint8_t, kNumClasses> bits{};

    std::uint32_t mask() const {
        std::uint32_t m = 0;
        for (int i = 0; i < kNumClasses; ++i)
            if (bits[static_cast<std::size_t>(i)]) m |= (1u << i);
        return m;
    }

    static LabelVector from_mask(std::uint32_t m) {
        LabelVector v;
        for (int i = 0; i < kNumClasses; ++i)
            v.bits[static_cast<std::size_t>(i)] = (m >> i) & 1u;
        return v;
    }

    bool operator==(const LabelVector&) const = default;
};

}  // namespace reeflora
