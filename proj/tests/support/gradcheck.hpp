#pragma once

#include <algorithm>
#include <vector>

#include "hva/autodiff.hpp"
#include "hva/common.hpp"

// Central finite-difference gradient checking, always in double. The loss
// builder is re-invoked for every probe so the graph is rebuilt against the
// perturbed leaf values.

namespace testsupport {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    std::string worst_leaf;
};

inline double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
    return std::abs(analytic - fd) / denom;
}

// leaves: (name, node) pairs whose gradients are checked. samples_per_leaf
// caps the probed coordinates per leaf (deterministic choice via seed).
template <typename MakeLoss>
GradCheckReport finite_diff_check(MakeLoss&& make_loss,
                                  const std::vector<std::pair<std::string, hva::Var<double>>>& leaves,
                                  std::int64_t samples_per_leaf = 6, double step = 1e-5,
                                  std::uint64_t seed = 1234) {
    auto zero_all = [&] {
        for (const auto& [name, leaf] : leaves)
            if (!leaf->grad.empty()) leaf->grad.fill(0.0);
    };

    zero_all();
    auto loss = make_loss();
    hva::backward(loss);

    std::vector<hva::Tensor<double>> grads;
    grads.reserve(leaves.size());
    for (const auto& [name, leaf] : leaves)
        grads.push_back(leaf->grad.empty() ? hva::Tensor<double>::zeros(leaf->value.shape()) : leaf->grad);

    hva::Rng rng(seed);
    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const auto& [name, leaf] = leaves[li];
        const std::int64_t n = leaf->value.numel();
        std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        rng.shuffle(idx.begin(), idx.end());
        const std::int64_t take = std::min<std::int64_t>(n, samples_per_leaf);
        for (std::int64_t s = 0; s < take; ++s) {
            const std::int64_t i = idx[static_cast<std::size_t>(s)];
            const double saved = leaf->value[i];
            leaf->value[i] = saved + step;
            const double lp = make_loss()->value[0];
            leaf->value[i] = saved - step;
            const double lm = make_loss()->value[0];
            leaf->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double err = rel_err(grads[li][i], fd);
            ++report.checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_leaf = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace testsupport
