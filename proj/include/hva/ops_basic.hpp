#pragma once

#include <cmath>

#include "hva/autodiff.hpp"
#include "hva/linalg.hpp"

// Elementwise, reduction and matrix primitives of the tape. Each op computes
// its value eagerly and registers a closure that scatters grad into parents.

namespace hva {

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
    if (!a->value.same_shape(b->value))
        fail_shape("add: shape mismatch ", shape_str(a->value.shape()), " vs ", shape_str(b->value.shape()));
    Tensor<Real> out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return attach<Real>(std::move(out), {a, b}, [a, b](Node<Real>& o) {
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += o.grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += o.grad[i];
        }
    });
}

template <typename Real>
Var<Real> add3(const Var<Real>& a, const Var<Real>& b, const Var<Real>& c) {
    return add(add(a, b), c);
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
    if (!a->value.same_shape(b->value))
        fail_shape("mul: shape mismatch ", shape_str(a->value.shape()), " vs ", shape_str(b->value.shape()));
    Tensor<Real> out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return attach<Real>(std::move(out), {a, b}, [a, b](Node<Real>& o) {
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += o.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += o.grad[i] * a->value[i];
        }
    });
}

// out = scale * x + shift with compile-time-constant coefficients
template <typename Real>
Var<Real> affine(const Var<Real>& x, Real scale, Real shift) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = scale * out[i] + shift;
    return attach<Real>(std::move(out), {x}, [x, scale](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += scale * o.grad[i];
    });
}

// out = a ⊙ x + b with constant (non-learned) per-element coefficients
template <typename Real>
Var<Real> affine_elems(const Var<Real>& x, Tensor<Real> a, Tensor<Real> b) {
    if (!a.same_shape(x->value) || !b.same_shape(x->value)) fail_shape("affine_elems: coefficient shape mismatch");
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a[i] * out[i] + b[i];
    return attach<Real>(std::move(out), {x}, [x, a = std::move(a)](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += a[i] * o.grad[i];
    });
}

template <typename Real>
Var<Real> relu(const Var<Real>& x) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > Real(0) ? out[i] : Real(0);
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i)
            if (x->value[i] > Real(0)) gx[i] += o.grad[i];
    });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real>& x) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const Real v = out[i];
        out[i] = v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                              : std::exp(v) / (Real(1) + std::exp(v));
    }
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i) {
            const Real s = o.value[i];
            gx[i] += o.grad[i] * s * (Real(1) - s);
        }
    });
}

template <typename Real>
Var<Real> log_op(const Var<Real>& x) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += o.grad[i] / x->value[i];
    });
}

// out = x^p for x >= 0 and constant exponent
template <typename Real>
Var<Real> pow_const(const Var<Real>& x, Real p) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::pow(out[i], p);
    return attach<Real>(std::move(out), {x, }, [x, p](Node<Real>& o) {
        if (p == Real(0)) return;
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i)
            gx[i] += o.grad[i] * p * std::pow(x->value[i], p - Real(1));
    });
}

template <typename Real>
Var<Real> clamp(const Var<Real>& x, Real lo, Real hi) {
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
    return attach<Real>(std::move(out), {x}, [x, lo, hi](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i)
            if (x->value[i] > lo && x->value[i] < hi) gx[i] += o.grad[i];
    });
}

template <typename Real>
Var<Real> mean_all(const Var<Real>& x) {
    const std::int64_t n = x->value.numel();
    Real acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += x->value[i];
    return attach<Real>(Tensor<Real>::scalar(acc / static_cast<Real>(n)), {x}, [x, n](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        const Real g = o.grad[0] / static_cast<Real>(n);
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

template <typename Real>
Var<Real> reshape(const Var<Real>& x, Shape new_shape) {
    Tensor<Real> out = x->value.reshaped(std::move(new_shape));
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += o.grad[i];
    });
}

namespace detail {

template <typename Real>
void transpose_last2_raw(const Tensor<Real>& in, Tensor<Real>& out) {
    const auto r = in.rank();
    const std::int64_t M = in.dim(r - 2), N = in.dim(r - 1);
    const std::int64_t batch = in.numel() / (M * N);
    for (std::int64_t b = 0; b < batch; ++b) {
        const Real* src = in.data() + b * M * N;
        Real* dst = out.data() + b * M * N;
        for (std::int64_t i = 0; i < M; ++i)
            for (std::int64_t j = 0; j < N; ++j) dst[j * M + i] = src[i * N + j];
    }
}

}  // namespace detail

template <typename Real>
Var<Real> transpose_last2(const Var<Real>& x) {
    if (x->value.rank() < 2) fail_shape("transpose_last2: rank must be >= 2");
    Shape s = x->value.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    Tensor<Real> out(s);
    detail::transpose_last2_raw(x->value, out);
    return attach<Real>(std::move(out), {x}, [x](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        Tensor<Real> gt(x->value.shape());
        detail::transpose_last2_raw(o.grad, gt);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += gt[i];
    });
}

// softmax over the last axis, max-subtracted per row
template <typename Real>
Var<Real> softmax_lastdim(const Var<Real>& x) {
    const auto r = x->value.rank();
    const std::int64_t C = x->value.dim(r - 1);
    const std::int64_t rows = x->value.numel() / C;
    Tensor<Real> out(x->value.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        const Real* src = x->value.data() + i * C;
        Real* dst = out.data() + i * C;
        Real mx = src[0];
        for (std::int64_t j = 1; j < C; ++j) mx = std::max(mx, src[j]);
        Real sum = 0;
        for (std::int64_t j = 0; j < C; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (std::int64_t j = 0; j < C; ++j) dst[j] /= sum;
    }
    return attach<Real>(std::move(out), {x}, [x, rows, C](Node<Real>& o) {
        auto& gx = x->ensure_grad();
        for (std::int64_t i = 0; i < rows; ++i) {
            const Real* y = o.value.data() + i * C;
            const Real* g = o.grad.data() + i * C;
            Real dot = 0;
            for (std::int64_t j = 0; j < C; ++j) dot += y[j] * g[j];
            Real* dst = gx.data() + i * C;
            for (std::int64_t j = 0; j < C; ++j) dst[j] += y[j] * (g[j] - dot);
        }
    });
}

// batched matmul: (B,M,K) x (B,K,N) -> (B,M,N)
template <typename Real>
Var<Real> bmm(const Var<Real>& a, const Var<Real>& b) {
    const auto& sa = a->value.shape();
    const auto& sb = b->value.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
        fail_shape("bmm: incompatible shapes ", shape_str(sa), " x ", shape_str(sb));
    const std::int64_t B = sa[0], M = sa[1], K = sa[2], N = sb[2];
    Tensor<Real> out({B, M, N});
    for (std::int64_t i = 0; i < B; ++i)
        matmul_nn(out.data() + i * M * N, a->value.data() + i * M * K, b->value.data() + i * K * N, M, K, N);
    return attach<Real>(std::move(out), {a, b}, [a, b, B, M, K, N](Node<Real>& o) {
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (std::int64_t i = 0; i < B; ++i)
                matmul_nt(ga.data() + i * M * K, o.grad.data() + i * M * N, b->value.data() + i * K * N, M, N, K,
                          true);
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (std::int64_t i = 0; i < B; ++i)
                matmul_tn(gb.data() + i * K * N, a->value.data() + i * M * K, o.grad.data() + i * M * N, K, M, N,
                          true);
        }
    });
}

// x (..., Cin) -> (..., Cout) with weight (Cout, Cin) and optional bias (Cout)
template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias) {
    const auto& sx = x->value.shape();
    const std::int64_t Cin = sx.back();
    const std::int64_t R = x->value.numel() / Cin;
    const std::int64_t Cout = weight->value.dim(0);
    if (weight->value.rank() != 2 || weight->value.dim(1) != Cin)
        fail_shape("linear: weight ", shape_str(weight->value.shape()), " does not accept input ", shape_str(sx));
    if (bias && bias->value.numel() != Cout) fail_shape("linear: bias size mismatch");
    Shape so = sx;
    so.back() = Cout;
    Tensor<Real> out(so);
    matmul_nt(out.data(), x->value.data(), weight->value.data(), R, Cin, Cout);
    if (bias) {
        for (std::int64_t r = 0; r < R; ++r) {
            Real* row = out.data() + r * Cout;
            for (std::int64_t c = 0; c < Cout; ++c) row[c] += bias->value[c];
        }
    }
    std::vector<Var<Real>> parents = bias ? std::vector<Var<Real>>{x, weight, bias} : std::vector<Var<Real>>{x, weight};
    return attach<Real>(std::move(out), std::move(parents), [x, weight, bias, R, Cin, Cout](Node<Real>& o) {
        if (x->requires_grad)
            matmul_nn(x->ensure_grad().data(), o.grad.data(), weight->value.data(), R, Cout, Cin, true);
        if (weight->requires_grad)
            matmul_tn(weight->ensure_grad().data(), o.grad.data(), x->value.data(), Cout, R, Cin, true);
        if (bias && bias->requires_grad) {
            auto& gb = bias->ensure_grad();
            for (std::int64_t r = 0; r < R; ++r) {
                const Real* row = o.grad.data() + r * Cout;
                for (std::int64_t c = 0; c < Cout; ++c) gb[c] += row[c];
            }
        }
    });
}

// token projection shared across the batch: x (B,N,C), E (P,N) -> (B,P,C)
template <typename Real>
Var<Real> project_tokens(const Var<Real>& x, const Var<Real>& E) {
    const auto& sx = x->value.shape();
    if (sx.size() != 3 || E->value.rank() != 2 || E->value.dim(1) != sx[1])
        fail_shape("project_tokens: shapes ", shape_str(sx), " and ", shape_str(E->value.shape()));
    const std::int64_t B = sx[0], N = sx[1], C = sx[2], P = E->value.dim(0);
    Tensor<Real> out({B, P, C});
    for (std::int64_t b = 0; b < B; ++b)
        matmul_nn(out.data() + b * P * C, E->value.data(), x->value.data() + b * N * C, P, N, C);
    return attach<Real>(std::move(out), {x, E}, [x, E, B, N, C, P](Node<Real>& o) {
        if (E->requires_grad) {
            auto& ge = E->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                matmul_nt(ge.data(), o.grad.data() + b * P * C, x->value.data() + b * N * C, P, C, N, true);
        }
        if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                matmul_tn(gx.data() + b * N * C, E->value.data(), o.grad.data() + b * P * C, N, P, C, true);
        }
    });
}

// out = x / s with s a learnable 1-element parameter (attention temperature)
template <typename Real>
Var<Real> div_by_scalar(const Var<Real>& x, const Var<Real>& s) {
    if (s->value.numel() != 1) fail_shape("div_by_scalar: scale must hold one element");
    const Real sv = s->value[0];
    Tensor<Real> out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= sv;
    return attach<Real>(std::move(out), {x, s}, [x, s](Node<Real>& o) {
        const Real sv = s->value[0];
        if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += o.grad[i] / sv;
        }
        if (s->requires_grad) {
            Real acc = 0;
            for (std::int64_t i = 0; i < o.grad.numel(); ++i) acc += o.grad[i] * o.value[i];
            s->ensure_grad()[0] -= acc / sv;
        }
    });
}

}  // namespace hva
