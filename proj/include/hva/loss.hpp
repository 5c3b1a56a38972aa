#pragma once

// Focal loss on per-case probabilities:
//   FL = -alpha_t (1 - p_t)^gamma log(p_t),  p_t = p for y=1, 1-p for y=0.
// Probabilities are clamped to [eps, 1-eps] before the log.

#include <vector>

#include "hva/ops_basic.hpp"

namespace hva {

inline constexpr double focal_eps = 1e-7;

// Per-class weights spelled out; the usual single-alpha convention wraps this.
template <typename Real>
Var<Real> focal_loss_weighted(const Var<Real>& p, const std::vector<int>& labels, Real alpha_pos,
                              Real alpha_neg, Real gamma) {
    const std::int64_t n = p->value.numel();
    if (n != static_cast<std::int64_t>(labels.size()))
        fail_shape("focal_loss: ", n, " probabilities vs ", labels.size(), " labels");

    const auto& shape = p->value.shape();
    Tensor<Real> a(shape), b(shape), neg_alpha(shape);
    for (std::int64_t i = 0; i < n; ++i) {
        const bool pos = labels[static_cast<std::size_t>(i)] != 0;
        a[i] = pos ? Real(1) : Real(-1);  // p_t = a*p + b
        b[i] = pos ? Real(0) : Real(1);
        neg_alpha[i] = -(pos ? alpha_pos : alpha_neg);
    }
    auto p_t = clamp(affine_elems(p, std::move(a), std::move(b)), Real(focal_eps), Real(1) - Real(focal_eps));
    auto modulator = pow_const(affine(p_t, Real(-1), Real(1)), gamma);
    auto per_case = affine_elems(mul(modulator, log_op(p_t)), std::move(neg_alpha),
                                 Tensor<Real>::zeros(shape));
    return mean_all(per_case);
}

template <typename Real>
Var<Real> focal_loss(const Var<Real>& p, const std::vector<int>& labels, Real alpha, Real gamma) {
    return focal_loss_weighted(p, labels, alpha, Real(1) - alpha, gamma);
}

}  // namespace hva
