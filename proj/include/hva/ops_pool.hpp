#pragma once

#include "hva/autodiff.hpp"

namespace hva {

namespace detail {

template <typename Real>
std::int64_t spatial_size(const Tensor<Real>& t) {
    std::int64_t s = 1;
    for (std::int64_t i = 2; i < t.rank(); ++i) s *= t.dim(i);
    return s;
}

}  // namespace detail

// (B,C,spatial...) -> (B,C), mean over all spatial positions
template <typename Real>
Var<Real> global_avg_pool(const Var<Real>& x) {
    const std::int64_t B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t S = detail::spatial_size(x->value);
    Tensor<Real> out({B, C});
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const Real* src = x->value.data() + bc * S;
        Real acc = 0;
        for (std::int64_t i = 0; i < S; ++i) acc += src[i];
        out[bc] = acc / static_cast<Real>(S);
    }
    return attach<Real>(std::move(out), {x}, [x, B, C, S](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const Real g = o.grad[bc] / static_cast<Real>(S);
            Real* dst = gx.data() + bc * S;
            for (std::int64_t i = 0; i < S; ++i) dst[i] += g;
        }
    });
}

// (B,C,spatial...) -> (B,C), max over all spatial positions
template <typename Real>
Var<Real> global_max_pool(const Var<Real>& x) {
    const std::int64_t B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t S = detail::spatial_size(x->value);
    Tensor<Real> out({B, C});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(B * C));
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const Real* src = x->value.data() + bc * S;
        std::int64_t best = 0;
        for (std::int64_t i = 1; i < S; ++i)
            if (src[i] > src[best]) best = i;
        (*argmax)[static_cast<std::size_t>(bc)] = best;
        out[bc] = src[best];
    }
    return attach<Real>(std::move(out), {x}, [x, B, C, S, argmax](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t bc = 0; bc < B * C; ++bc)
            gx[bc * S + (*argmax)[static_cast<std::size_t>(bc)]] += o.grad[bc];
    });
}

// (B,C,spatial...) -> (B,1,spatial...), mean over channels
template <typename Real>
Var<Real> channel_avg_pool(const Var<Real>& x) {
    const std::int64_t B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t S = detail::spatial_size(x->value);
    Shape so = x->value.shape();
    so[1] = 1;
    Tensor<Real> out(so);
    for (std::int64_t b = 0; b < B; ++b) {
        Real* dst = out.data() + b * S;
        const Real* src = x->value.data() + b * C * S;
        for (std::int64_t i = 0; i < S; ++i) dst[i] = 0;
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < S; ++i) dst[i] += src[c * S + i];
        for (std::int64_t i = 0; i < S; ++i) dst[i] /= static_cast<Real>(C);
    }
    return attach<Real>(std::move(out), {x}, [x, B, C, S](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b) {
            const Real* g = o.grad.data() + b * S;
            Real* dst = gx.data() + b * C * S;
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t i = 0; i < S; ++i) dst[c * S + i] += g[i] / static_cast<Real>(C);
        }
    });
}

// (B,C,spatial...) -> (B,1,spatial...), max over channels
template <typename Real>
Var<Real> channel_max_pool(const Var<Real>& x) {
    const std::int64_t B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t S = detail::spatial_size(x->value);
    Shape so = x->value.shape();
    so[1] = 1;
    Tensor<Real> out(so);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(B * S));
    for (std::int64_t b = 0; b < B; ++b) {
        const Real* src = x->value.data() + b * C * S;
        Real* dst = out.data() + b * S;
        for (std::int64_t i = 0; i < S; ++i) {
            std::int64_t best = 0;
            for (std::int64_t c = 1; c < C; ++c)
                if (src[c * S + i] > src[best * S + i]) best = c;
            (*argmax)[static_cast<std::size_t>(b * S + i)] = best;
            dst[i] = src[best * S + i];
        }
    }
    return attach<Real>(std::move(out), {x}, [x, B, C, S, argmax](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b) {
            const Real* g = o.grad.data() + b * S;
            Real* dst = gx.data() + b * C * S;
            for (std::int64_t i = 0; i < S; ++i)
                dst[(*argmax)[static_cast<std::size_t>(b * S + i)] * S + i] += g[i];
        }
    });
}

// concatenate along the channel axis (axis 1)
template <typename Real>
Var<Real> concat_channels(const Var<Real>& a, const Var<Real>& b) {
    const auto& sa = a->value.shape();
    const auto& sb = b->value.shape();
    if (sa.size() != sb.size() || sa.size() < 2) fail_shape("concat_channels: rank mismatch");
    for (std::size_t i = 0; i < sa.size(); ++i)
        if (i != 1 && sa[i] != sb[i])
            fail_shape("concat_channels: shapes ", shape_str(sa), " vs ", shape_str(sb));
    const std::int64_t B = sa[0], Ca = sa[1], Cb = sb[1];
    std::int64_t S = 1;
    for (std::size_t i = 2; i < sa.size(); ++i) S *= sa[i];
    Shape so = sa;
    so[1] = Ca + Cb;
    Tensor<Real> out(so);
    for (std::int64_t i = 0; i < B; ++i) {
        std::copy(a->value.data() + i * Ca * S, a->value.data() + (i + 1) * Ca * S,
                  out.data() + i * (Ca + Cb) * S);
        std::copy(b->value.data() + i * Cb * S, b->value.data() + (i + 1) * Cb * S,
                  out.data() + i * (Ca + Cb) * S + Ca * S);
    }
    return attach<Real>(std::move(out), {a, b}, [a, b, B, Ca, Cb, S](Node<Real>& o) {
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < B; ++i) {
                const Real* g = o.grad.data() + i * (Ca + Cb) * S;
                Real* dst = ga.data() + i * Ca * S;
                for (std::int64_t j = 0; j < Ca * S; ++j) dst[j] += g[j];
            }
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (std::int64_t i = 0; i < B; ++i) {
                const Real* g = o.grad.data() + i * (Ca + Cb) * S + Ca * S;
                Real* dst = gb.data() + i * Cb * S;
                for (std::int64_t j = 0; j < Cb * S; ++j) dst[j] += g[j];
            }
        }
    });
}

// channels [c0, c1) of x
template <typename Real>
Var<Real> slice_channels(const Var<Real>& x, std::int64_t c0, std::int64_t c1) {
    const auto& sx = x->value.shape();
    const std::int64_t B = sx[0], C = sx[1];
    if (c0 < 0 || c1 > C || c0 >= c1) fail_shape("slice_channels: bad range [", c0, ",", c1, ") for C=", C);
    std::int64_t S = 1;
    for (std::size_t i = 2; i < sx.size(); ++i) S *= sx[i];
    Shape so = sx;
    so[1] = c1 - c0;
    Tensor<Real> out(so);
    const std::int64_t Cs = c1 - c0;
    for (std::int64_t b = 0; b < B; ++b)
        std::copy(x->value.data() + (b * C + c0) * S, x->value.data() + (b * C + c1) * S, out.data() + b * Cs * S);
    return attach<Real>(std::move(out), {x}, [x, B, C, S, c0, Cs](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b) {
            const Real* g = o.grad.data() + b * Cs * S;
            Real* dst = gx.data() + (b * C + c0) * S;
            for (std::int64_t j = 0; j < Cs * S; ++j) dst[j] += g[j];
        }
    });
}

// f (B,C,spatial...) * gate (B,C), gate broadcast over spatial positions
template <typename Real>
Var<Real> mul_channel_gate(const Var<Real>& f, const Var<Real>& gate) {
    const std::int64_t B = f->value.dim(0), C = f->value.dim(1);
    const std::int64_t S = detail::spatial_size(f->value);
    if (gate->value.rank() != 2 || gate->value.dim(0) != B || gate->value.dim(1) != C)
        fail_shape("mul_channel_gate: gate must be (B,C)");
    Tensor<Real> out = f->value;
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        Real* dst = out.data() + bc * S;
        const Real g = gate->value[bc];
        for (std::int64_t i = 0; i < S; ++i) dst[i] *= g;
    }
    return attach<Real>(std::move(out), {f, gate}, [f, gate, B, C, S](Node<Real>& o) {
        if (f->requires_grad) {
            auto& gf = f->ensure_grad();
            for (std::int64_t bc = 0; bc < B * C; ++bc) {
                const Real g = gate->value[bc];
                const Real* go = o.grad.data() + bc * S;
                Real* dst = gf.data() + bc * S;
                for (std::int64_t i = 0; i < S; ++i) dst[i] += go[i] * g;
            }
        }
        if (gate->requires_grad) {
            auto& gg = gate->ensure_grad();
            for (std::int64_t bc = 0; bc < B * C; ++bc) {
                const Real* go = o.grad.data() + bc * S;
                const Real* fv = f->value.data() + bc * S;
                Real acc = 0;
                for (std::int64_t i = 0; i < S; ++i) acc += go[i] * fv[i];
                gg[bc] += acc;
            }
        }
    });
}

// f (B,C,spatial...) * gate (B,1,spatial...), gate broadcast over channels
template <typename Real>
Var<Real> mul_spatial_gate(const Var<Real>& f, const Var<Real>& gate) {
    const std::int64_t B = f->value.dim(0), C = f->value.dim(1);
    const std::int64_t S = detail::spatial_size(f->value);
    if (gate->value.dim(0) != B || gate->value.dim(1) != 1 || detail::spatial_size(gate->value) != S)
        fail_shape("mul_spatial_gate: gate must be (B,1,spatial...) matching f");
    Tensor<Real> out = f->value;
    for (std::int64_t b = 0; b < B; ++b) {
        const Real* g = gate->value.data() + b * S;
        for (std::int64_t c = 0; c < C; ++c) {
            Real* dst = out.data() + (b * C + c) * S;
            for (std::int64_t i = 0; i < S; ++i) dst[i] *= g[i];
        }
    }
    return attach<Real>(std::move(out), {f, gate}, [f, gate, B, C, S](Node<Real>& o) {
        if (f->requires_grad) {
            auto& gf = f->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b) {
                const Real* g = gate->value.data() + b * S;
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real* go = o.grad.data() + (b * C + c) * S;
                    Real* dst = gf.data() + (b * C + c) * S;
                    for (std::int64_t i = 0; i < S; ++i) dst[i] += go[i] * g[i];
                }
            }
        }
        if (gate->requires_grad) {
            auto& gg = gate->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b) {
                Real* dst = gg.data() + b * S;
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real* go = o.grad.data() + (b * C + c) * S;
                    const Real* fv = f->value.data() + (b * C + c) * S;
                    for (std::int64_t i = 0; i < S; ++i) dst[i] += go[i] * fv[i];
                }
            }
        }
    });
}

namespace detail {

// (B,C,A1,A2) <-> (B,N,C) with token index n = a1*A2 + a2
template <typename Real>
void planes_to_tokens_raw(const Tensor<Real>& in, Tensor<Real>& out) {
    const std::int64_t B = in.dim(0), C = in.dim(1), N = in.dim(2) * in.dim(3);
    for (std::int64_t b = 0; b < B; ++b) {
        const Real* src = in.data() + b * C * N;
        Real* dst = out.data() + b * N * C;
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t n = 0; n < N; ++n) dst[n * C + c] = src[c * N + n];
    }
}

template <typename Real>
void tokens_to_planes_raw(const Tensor<Real>& in, Tensor<Real>& out) {
    const std::int64_t B = out.dim(0), C = out.dim(1), N = out.dim(2) * out.dim(3);
    for (std::int64_t b = 0; b < B; ++b) {
        const Real* src = in.data() + b * N * C;
        Real* dst = out.data() + b * C * N;
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t n = 0; n < N; ++n) dst[c * N + n] = src[n * C + c];
    }
}

}  // namespace detail

template <typename Real>
Var<Real> planes_to_tokens(const Var<Real>& x) {
    const auto& s = x->value.shape();
    if (s.size() != 4) fail_shape("planes_to_tokens: expected (B,C,A1,A2), got ", shape_str(s));
    Tensor<Real> out({s[0], s[2] * s[3], s[1]});
    detail::planes_to_tokens_raw(x->value, out);
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        Tensor<Real> tmp(gx.shape());
        detail::tokens_to_planes_raw(o.grad, tmp);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += tmp[i];
    });
}

template <typename Real>
Var<Real> tokens_to_planes(const Var<Real>& x, std::int64_t A1, std::int64_t A2) {
    const auto& s = x->value.shape();
    if (s.size() != 3 || s[1] != A1 * A2)
        fail_shape("tokens_to_planes: ", shape_str(s), " does not hold ", A1, "x", A2, " tokens");
    Tensor<Real> out({s[0], s[2], A1, A2});
    detail::tokens_to_planes_raw(x->value, out);
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        Tensor<Real> tmp(gx.shape());
        detail::planes_to_tokens_raw(o.grad, tmp);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += tmp[i];
    });
}

}  // namespace hva
