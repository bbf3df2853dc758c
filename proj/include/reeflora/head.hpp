#pragma once

#include <algorithm>
#include <cmath>

#include "reeflora/autodiff.hpp"
#include "reeflora/labels.hpp"
#include "reeflora/tensor.hpp"

namespace reeflora {

// Probabilities entering the loss are clamped away from {0, 1} by this
// margin so the logs stay finite.
inline constexpr double kProbEpsilon = 1e-7;

// Binary cross-entropy over a batch: summed over classes, averaged over
// samples. probs and labels are N x C (or rank-1 for N == 1); label entries
// must be 0 or 1.
template <typename T>
double bce_loss(const Tensor<T>& probs, const Tensor<T>& labels) {
    if (!probs.same_shape(labels)) {
        throw ContractError("bce_loss batch shapes differ: " + shape_str(probs.shape) + " vs " +
                            shape_str(labels.shape));
    }
    auto [rows, cols] = detail::as_rows(probs.shape);
    double acc = 0.0;
    for (std::int64_t i = 0; i < rows * cols; ++i) {
        const double p =
            std::clamp(static_cast<double>(probs[i]), kProbEpsilon, 1.0 - kProbEpsilon);
        const double y = static_cast<double>(labels[i]);
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(rows);
}

// Threshold probabilities into a label set; positive on ties (>=). A
// threshold of 0 marks everything positive, useful for diagnostics.
template <typename T>
LabelVector predict_labels(const Tensor<T>& probs, double threshold = 0.5) {
    if (probs.size() > kNumClasses) {
        throw ContractError("predict_labels expects at most " + std::to_string(kNumClasses) +
                            " probabilities, got " + shape_str(probs.shape));
    }
    LabelVector out;
    for (std::int64_t i = 0; i < probs.size(); ++i)
        out.bits[static_cast<std::size_t>(i)] = static_cast<double>(probs[i]) >= threshold ? 1 : 0;
    return out;
}

template <typename T>
Tensor<T> labels_to_tensor(const LabelVector& labels, int n_classes = kNumClasses) {
    Tensor<T> t({n_classes});
    for (int i = 0; i < n_classes; ++i)
        t[i] = static_cast<T>(labels.bits[static_cast<std::size_t>(i)]);
    return t;
}

}  // namespace reeflora
