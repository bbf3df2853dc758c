#include "reeflora/metrics.hpp"

#include <cmath>

namespace reeflora {

namespace {

double round2(double pct) { return std::round(pct * 100.0) / 100.0; }

double pct2(double fraction) { return round2(fraction * 100.0); }

std::vector<std::uint32_t> to_masks(std::span<const LabelVector> v) {
    std::vector<std::uint32_t> out;
    out.reserve(v.size());
    for (const auto& lv : v) out.push_back(lv.mask());
    return out;
}

void check_batch(std::size_t preds, std::size_t truths) {
    if (preds != truths) {
        throw ContractError("prediction batch size " + std::to_string(preds) +
                            " differs from truth batch size " + std::to_string(truths));
    }
    if (preds == 0) throw ContractError("metrics require a non-empty batch");
}

}  // namespace

void ConfusionCounts::merge(const ConfusionCounts& other) {
    if (n_classes == 0) n_classes = other.n_classes;
    if (n_classes != other.n_classes) {
        throw ContractError("cannot merge confusion counts with different class counts");
    }
    n_samples += other.n_samples;
    for (int i = 0; i < n_classes; ++i) {
        tp[static_cast<std::size_t>(i)] += other.tp[static_cast<std::size_t>(i)];
        fp[static_cast<std::size_t>(i)] += other.fp[static_cast<std::size_t>(i)];
        fn[static_cast<std::size_t>(i)] += other.fn[static_cast<std::size_t>(i)];
        tn[static_cast<std::size_t>(i)] += other.tn[static_cast<std::size_t>(i)];
    }
}

ConfusionCounts confusion_counts(std::span<const std::uint32_t> preds,
                                 std::span<const std::uint32_t> truths, int n_classes) {
    check_batch(preds.size(), truths.size());
    if (n_classes < 1 || n_classes > kNumClasses) {
        throw ContractError("n_classes out of range: " + std::to_string(n_classes));
    }
    ConfusionCounts c;
    c.n_classes = n_classes;
    c.n_samples = static_cast<long long>(preds.size());
    for (std::size_t s = 0; s < preds.size(); ++s) {
        for (int i = 0; i < n_classes; ++i) {
            const bool p = (preds[s] >> i) & 1u;
            const bool t = (truths[s] >> i) & 1u;
            const auto k = static_cast<std::size_t>(i);
            if (p && t)
                ++c.tp[k];
            else if (p && !t)
                ++c.fp[k];
            else if (!p && t)
                ++c.fn[k];
            else
                ++c.tn[k];
        }
    }
    return c;
}

double match_ratio(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> truths) {
    check_batch(preds.size(), truths.size());
    std::size_t correct = 0;
    for (std::size_t s = 0; s < preds.size(); ++s)
        if (preds[s] == truths[s]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

F1Breakdown macro_f1(const ConfusionCounts& counts) {
    F1Breakdown out;
    out.n_classes = counts.n_classes;
    double sum = 0.0;
    for (int i = 0; i < counts.n_classes; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double tp = static_cast<double>(counts.tp[k]);
        const double p_den = tp + static_cast<double>(counts.fp[k]);
        const double r_den = tp + static_cast<double>(counts.fn[k]);
        const double p = p_den > 0.0 ? tp / p_den : 0.0;
        const double r = r_den > 0.0 ? tp / r_den : 0.0;
        const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        out.precision[k] = p;
        out.recall[k] = r;
        out.f1[k] = f;
        sum += f;
    }
    out.macro_f1 = counts.n_classes > 0 ? sum / static_cast<double>(counts.n_classes) : 0.0;
    return out;
}

MicroScores micro_f1(const ConfusionCounts& counts) {
    long long tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < counts.n_classes; ++i) {
        tp += counts.tp[static_cast<std::size_t>(i)];
        fp += counts.fp[static_cast<std::size_t>(i)];
        fn += counts.fn[static_cast<std::size_t>(i)];
    }
    MicroScores out;
    const double p_den = static_cast<double>(tp + fp);
    const double r_den = static_cast<double>(tp + fn);
    out.precision = p_den > 0.0 ? static_cast<double>(tp) / p_den : 0.0;
    out.recall = r_den > 0.0 ? static_cast<double>(tp) / r_den : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

MetricsReport compute_report(std::span<const std::uint32_t> preds,
                             std::span<const std::uint32_t> truths, int n_classes) {
    MetricsReport r;
    r.counts = confusion_counts(preds, truths, n_classes);
    r.n_samples = r.counts.n_samples;
    r.n_classes = n_classes;
    r.match_ratio = match_ratio(preds, truths);
    r.per_class = macro_f1(r.counts);
    r.micro = micro_f1(r.counts);
    return r;
}

ConfusionCounts confusion_counts(std::span<const LabelVector> preds,
                                 std::span<const LabelVector> truths) {
    auto p = to_masks(preds);
    auto t = to_masks(truths);
    return confusion_counts(p, t, kNumClasses);
}

double match_ratio(std::span<const LabelVector> preds, std::span<const LabelVector> truths) {
    auto p = to_masks(preds);
    auto t = to_masks(truths);
    return match_ratio(std::span<const std::uint32_t>(p), std::span<const std::uint32_t>(t));
}

MetricsReport compute_report(std::span<const LabelVector> preds,
                             std::span<const LabelVector> truths) {
    auto p = to_masks(preds);
    auto t = to_masks(truths);
    return compute_report(std::span<const std::uint32_t>(p), std::span<const std::uint32_t>(t),
                          kNumClasses);
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["n_samples"] = n_samples;
    j["n_classes"] = n_classes;
    j["match_ratio_pct"] = pct2(match_ratio);
    j["micro_precision_pct"] = pct2(micro.precision);
    j["micro_recall_pct"] = pct2(micro.recall);
    j["micro_f1_pct"] = pct2(micro.f1);
    j["macro_f1_pct"] = pct2(per_class.macro_f1);
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (int i = 0; i < n_classes; ++i) {
        const auto k = static_cast<std::size_t>(i);
        nlohmann::ordered_json c;
        c["class"] = (n_classes == kNumClasses) ? kClassNames[k] : ("C" + std::to_string(i));
        c["precision_pct"] = pct2(per_class.precision[k]);
        c["recall_pct"] = pct2(per_class.recall[k]);
        c["f1_pct"] = pct2(per_class.f1[k]);
        c["tp"] = counts.tp[k];
        c["fp"] = counts.fp[k];
        c["fn"] = counts.fn[k];
        c["tn"] = counts.tn[k];
        classes.push_back(c);
    }
    j["per_class"] = classes;
    return j;
}

}  // namespace reeflora
