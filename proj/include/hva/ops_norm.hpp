#pragma once

#include "hva/autodiff.hpp"

namespace hva {

// Per-row normalization over the last axis with learnable per-channel
// scale/shift: y = gamma * (x - mu) / sqrt(var + eps) + beta.
template <typename Real>
Var<Real> layer_norm_lastdim(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta,
                             Real eps = Real(1e-5)) {
    const std::int64_t C = x->value.shape().back();
    const std::int64_t rows = x->value.numel() / C;
    if (gamma->value.numel() != C || beta->value.numel() != C)
        fail_shape("layer_norm_lastdim: gamma/beta must have ", C, " elements");

    Tensor<Real> out(x->value.shape());
    auto inv_std = std::make_shared<std::vector<Real>>(rows);
    auto means = std::make_shared<std::vector<Real>>(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* src = x->value.data() + r * C;
        Real mu = 0;
        for (std::int64_t c = 0; c < C; ++c) mu += src[c];
        mu /= static_cast<Real>(C);
        Real var = 0;
        for (std::int64_t c = 0; c < C; ++c) {
            const Real d = src[c] - mu;
            var += d * d;
        }
        var /= static_cast<Real>(C);
        const Real is = Real(1) / std::sqrt(var + eps);
        (*means)[r] = mu;
        (*inv_std)[r] = is;
        Real* dst = out.data() + r * C;
        for (std::int64_t c = 0; c < C; ++c)
            dst[c] = gamma->value[c] * (src[c] - mu) * is + beta->value[c];
    }

    return attach<Real>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, rows, C, inv_std, means](Node<Real>& o) {
        std::vector<Real> xhat(static_cast<std::size_t>(C));
        for (std::int64_t r = 0; r < rows; ++r) {
            const Real* src = x->value.data() + r * C;
            const Real* g = o.grad.data() + r * C;
            const Real is = (*inv_std)[r];
            const Real mu = (*means)[r];
            Real sum_u = 0, sum_ux = 0;
            for (std::int64_t c = 0; c < C; ++c) {
                xhat[static_cast<std::size_t>(c)] = (src[c] - mu) * is;
                const Real u = g[c] * gamma->value[c];
                sum_u += u;
                sum_ux += u * xhat[static_cast<std::size_t>(c)];
            }
            if (gamma->requires_grad) {
                auto& gg = gamma->ensure_grad();
                for (std::int64_t c = 0; c < C; ++c) gg[c] += g[c] * xhat[static_cast<std::size_t>(c)];
            }
            if (beta->requires_grad) {
                auto& gb = beta->ensure_grad();
                for (std::int64_t c = 0; c < C; ++c) gb[c] += g[c];
            }
            if (x->requires_grad) {
                auto& gx = x->ensure_grad();
                Real* dst = gx.data() + r * C;
                const Real mean_u = sum_u / static_cast<Real>(C);
                const Real mean_ux = sum_ux / static_cast<Real>(C);
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real u = g[c] * gamma->value[c];
                    dst[c] += is * (u - mean_u - xhat[static_cast<std::size_t>(c)] * mean_ux);
                }
            }
        }
    });
}

// Group normalization over (B, C, spatial...) with per-channel gamma/beta.
// Statistics are computed per (batch, group) across (C/groups) * spatial.
template <typename Real>
Var<Real> group_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, std::int64_t groups,
                     Real eps = Real(1e-5)) {
    const auto& s = x->value.shape();
    if (s.size() < 3) fail_shape("group_norm: expected (B,C,spatial...), got ", shape_str(s));
    const std::int64_t B = s[0], C = s[1];
    std::int64_t S = 1;
    for (std::size_t i = 2; i < s.size(); ++i) S *= s[i];
    if (C % groups != 0) fail_shape("group_norm: groups ", groups, " must divide channels ", C);
    if (gamma->value.numel() != C || beta->value.numel() != C)
        fail_shape("group_norm: gamma/beta must have ", C, " elements");
    const std::int64_t Cg = C / groups;
    const std::int64_t GS = Cg * S;

    Tensor<Real> out(s);
    auto inv_std = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(B * groups));
    auto means = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(B * groups));
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t g = 0; g < groups; ++g) {
            const Real* src = x->value.data() + (b * C + g * Cg) * S;
            Real mu = 0;
            for (std::int64_t i = 0; i < GS; ++i) mu += src[i];
            mu /= static_cast<Real>(GS);
            Real var = 0;
            for (std::int64_t i = 0; i < GS; ++i) {
                const Real d = src[i] - mu;
                var += d * d;
            }
            var /= static_cast<Real>(GS);
            const Real is = Real(1) / std::sqrt(var + eps);
            (*means)[static_cast<std::size_t>(b * groups + g)] = mu;
            (*inv_std)[static_cast<std::size_t>(b * groups + g)] = is;
            Real* dst = out.data() + (b * C + g * Cg) * S;
            for (std::int64_t c = 0; c < Cg; ++c) {
                const Real ga = gamma->value[g * Cg + c];
                const Real be = beta->value[g * Cg + c];
                for (std::int64_t i = 0; i < S; ++i)
                    dst[c * S + i] = ga * (src[c * S + i] - mu) * is + be;
            }
        }
    }

    return attach<Real>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, B, C, S, groups, Cg, GS, inv_std, means](Node<Real>& o) {
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t g = 0; g < groups; ++g) {
                const Real* src = x->value.data() + (b * C + g * Cg) * S;
                const Real* gr = o.grad.data() + (b * C + g * Cg) * S;
                const Real is = (*inv_std)[static_cast<std::size_t>(b * groups + g)];
                const Real mu = (*means)[static_cast<std::size_t>(b * groups + g)];
                Real sum_u = 0, sum_ux = 0;
                for (std::int64_t c = 0; c < Cg; ++c) {
                    const Real ga = gamma->value[g * Cg + c];
                    for (std::int64_t i = 0; i < S; ++i) {
                        const Real xh = (src[c * S + i] - mu) * is;
                        const Real u = gr[c * S + i] * ga;
                        sum_u += u;
                        sum_ux += u * xh;
                    }
                }
                if (gamma->requires_grad || beta->requires_grad) {
                    for (std::int64_t c = 0; c < Cg; ++c) {
                        Real dg = 0, db = 0;
                        for (std::int64_t i = 0; i < S; ++i) {
                            const Real xh = (src[c * S + i] - mu) * is;
                            dg += gr[c * S + i] * xh;
                            db += gr[c * S + i];
                        }
                        if (gamma->requires_grad) gamma->ensure_grad()[g * Cg + c] += dg;
                        if (beta->requires_grad) beta->ensure_grad()[g * Cg + c] += db;
                    }
                }
                if (x->requires_grad) {
                    auto& gx = x->ensure_grad();
                    Real* dst = gx.data() + (b * C + g * Cg) * S;
                    const Real mean_u = sum_u / static_cast<Real>(GS);
                    const Real mean_ux = sum_ux / static_cast<Real>(GS);
                    for (std::int64_t c = 0; c < Cg; ++c) {
                        const Real ga = gamma->value[g * Cg + c];
                        for (std::int64_t i = 0; i < S; ++i) {
                            const Real xh = (src[c * S + i] - mu) * is;
                            const Real u = gr[c * S + i] * ga;
                            dst[c * S + i] += is * (u - mean_u - xh * mean_ux);
                        }
                    }
                }
            }
        }
    });
}

// Largest divisor of C not exceeding 8; keeps group norm valid for the small
// channel counts used in tests.
inline std::int64_t groups_for_channels(std::int64_t C) {
    for (std::int64_t g = std::min<std::int64_t>(8, C); g > 1; --g)
        if (C % g == 0) return g;
    return 1;
}

}  // namespace hva
