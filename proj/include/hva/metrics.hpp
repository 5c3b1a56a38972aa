#pragma once

// Threshold metrics from confusion counts plus rank-based AUC. Fields whose
// denominator is zero are left unset rather than silently reported as 0.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "hva/common.hpp"

namespace hva {

struct MetricsReport {
    std::optional<double> auc;
    std::optional<double> f1, accuracy, sensitivity, specificity, precision;
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    auto put = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    put("auc", r.auc);
    put("f1", r.f1);
    put("accuracy", r.accuracy);
    put("sensitivity", r.sensitivity);
    put("specificity", r.specificity);
    put("precision", r.precision);
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["tn"] = r.tn;
    j["fn"] = r.fn;
}

// Mann-Whitney concordance via average ranks; ties count one half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw data_error(str_cat("auc: ", scores.size(), " scores vs ", labels.size(), " labels"));
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y != 0 ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw data_error("auc: both classes must be present");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mean_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] != 0) rank_sum_pos += mean_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline MetricsReport metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.tn = tn;
    r.fn = fn;
    const auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    r.sensitivity = ratio(tp, tp + fn);
    r.specificity = ratio(tn, tn + fp);
    r.precision = ratio(tp, tp + fp);
    if (r.precision && r.sensitivity && *r.precision + *r.sensitivity > 0)
        r.f1 = 2.0 * *r.precision * *r.sensitivity / (*r.precision + *r.sensitivity);
    return r;
}

inline MetricsReport confusion_metrics(const std::vector<double>& probs, const std::vector<int>& labels,
                                       double threshold = 0.5) {
    if (probs.size() != labels.size())
        throw data_error(str_cat("confusion_metrics: ", probs.size(), " probs vs ", labels.size(), " labels"));
    if (probs.empty()) throw data_error("confusion_metrics: empty input");
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        const bool truth = labels[i] != 0;
        if (pred && truth)
            ++tp;
        else if (pred && !truth)
            ++fp;
        else if (!pred && !truth)
            ++tn;
        else
            ++fn;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

}  // namespace hva
