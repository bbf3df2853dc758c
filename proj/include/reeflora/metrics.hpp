#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reeflora/errors.hpp"
#include "reeflora/labels.hpp"

namespace reeflora {

// Per-class binary confusion counts over a batch. Mergeable: component-wise
// sums combine partial batches.
struct ConfusionCounts {
    int n_classes = 0;
    long long n_samples = 0;
    std::array<long long, kNumClasses> tp{}, fp{}, fn{}, tn{};

    void merge(const ConfusionCounts& other);
};

struct F1Breakdown {
    int n_classes = 0;
    std::array<double, kNumClasses> precision{}, recall{}, f1{};
    double macro_f1 = 0.0;
};

struct MicroScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    long long n_samples = 0;
    int n_classes = 0;
    double match_ratio = 0.0;
    F1Breakdown per_class;
    MicroScores micro;
    ConfusionCounts counts;

    // Stable schema; metric values as percentages rounded to 2 decimals.
    nlohmann::ordered_json to_json() const;
};

// Predictions and truths as per-sample class bitmasks (bit i = class i).
ConfusionCounts confusion_counts(std::span<const std::uint32_t> preds,
                                 std::span<const std::uint32_t> truths, int n_classes);

// Fraction of samples whose full label set matches exactly.
double match_ratio(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> truths);

// Per-class precision/recall/F1 and their arithmetic mean. Any quotient with
// a zero denominator evaluates to 0 (documented convention).
F1Breakdown macro_f1(const ConfusionCounts& counts);

// Precision/recall pooled over all classes, then the harmonic mean.
MicroScores micro_f1(const ConfusionCounts& counts);

MetricsReport compute_report(std::span<const std::uint32_t> preds,
                             std::span<const std::uint32_t> truths, int n_classes);

// LabelVector convenience overloads for the 8-class task.
ConfusionCounts confusion_counts(std::span<const LabelVector> preds,
                                 std::span<const LabelVector> truths);
double match_ratio(std::span<const LabelVector> preds, std::span<const LabelVector> truths);
MetricsReport compute_report(std::span<const LabelVector> preds,
                             std::span<const LabelVector> truths);

}  // namespace reeflora
