#pragma once

#include "hva/autodiff.hpp"
#include "hva/linalg.hpp"

namespace hva {

namespace detail {

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    const std::int64_t out = (in + 2 * pad - k) / stride + 1;
    if (out < 1) fail_shape("conv: extent ", in, " too small for kernel ", k, " stride ", stride, " pad ", pad);
    return out;
}

// col is (Cin*k^3) x (Ho*Wo*Do), one column per output voxel
template <typename Real>
void im2col3d(const Real* x, std::int64_t Cin, std::int64_t H, std::int64_t W, std::int64_t D, std::int64_t k,
              std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, std::int64_t Do, Real* col) {
    const std::int64_t M = Ho * Wo * Do;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c) {
        for (std::int64_t kh = 0; kh < k; ++kh)
            for (std::int64_t kw = 0; kw < k; ++kw)
                for (std::int64_t kd = 0; kd < k; ++kd, ++row) {
                    Real* dst = col + row * M;
                    std::int64_t m = 0;
                    for (std::int64_t oh = 0; oh < Ho; ++oh) {
                        const std::int64_t ih = oh * stride - pad + kh;
                        const bool h_ok = ih >= 0 && ih < H;
                        for (std::int64_t ow = 0; ow < Wo; ++ow) {
                            const std::int64_t iw = ow * stride - pad + kw;
                            const bool hw_ok = h_ok && iw >= 0 && iw < W;
                            const Real* src = x + ((c * H + ih) * W + iw) * D;
                            for (std::int64_t od = 0; od < Do; ++od, ++m) {
                                const std::int64_t id = od * stride - pad + kd;
                                dst[m] = (hw_ok && id >= 0 && id < D) ? src[id] : Real(0);
                            }
                        }
                    }
                }
    }
}

template <typename Real>
void col2im3d(const Real* col, std::int64_t Cin, std::int64_t H, std::int64_t W, std::int64_t D, std::int64_t k,
              std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, std::int64_t Do, Real* x) {
    const std::int64_t M = Ho * Wo * Do;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c) {
        for (std::int64_t kh = 0; kh < k; ++kh)
            for (std::int64_t kw = 0; kw < k; ++kw)
                for (std::int64_t kd = 0; kd < k; ++kd, ++row) {
                    const Real* src = col + row * M;
                    std::int64_t m = 0;
                    for (std::int64_t oh = 0; oh < Ho; ++oh) {
                        const std::int64_t ih = oh * stride - pad + kh;
                        const bool h_ok = ih >= 0 && ih < H;
                        for (std::int64_t ow = 0; ow < Wo; ++ow) {
                            const std::int64_t iw = ow * stride - pad + kw;
                            const bool hw_ok = h_ok && iw >= 0 && iw < W;
                            Real* dst = x + ((c * H + ih) * W + iw) * D;
                            for (std::int64_t od = 0; od < Do; ++od, ++m) {
                                const std::int64_t id = od * stride - pad + kd;
                                if (hw_ok && id >= 0 && id < D) dst[id] += src[m];
                            }
                        }
                    }
                }
    }
}

// 2D variants for the plane-local refinement blocks
template <typename Real>
void im2col2d(const Real* x, std::int64_t Cin, std::int64_t H, std::int64_t W, std::int64_t k, std::int64_t stride,
              std::int64_t pad, std::int64_t Ho, std::int64_t Wo, Real* col) {
    const std::int64_t M = Ho * Wo;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c)
        for (std::int64_t kh = 0; kh < k; ++kh)
            for (std::int64_t kw = 0; kw < k; ++kw, ++row) {
                Real* dst = col + row * M;
                std::int64_t m = 0;
                for (std::int64_t oh = 0; oh < Ho; ++oh) {
                    const std::int64_t ih = oh * stride - pad + kh;
                    const bool h_ok = ih >= 0 && ih < H;
                    const Real* src = x + (c * H + ih) * W;
                    for (std::int64_t ow = 0; ow < Wo; ++ow, ++m) {
                        const std::int64_t iw = ow * stride - pad + kw;
                        dst[m] = (h_ok && iw >= 0 && iw < W) ? src[iw] : Real(0);
                    }
                }
            }
}

template <typename Real>
void col2im2d(const Real* col, std::int64_t Cin, std::int64_t H, std::int64_t W, std::int64_t k, std::int64_t stride,
              std::int64_t pad, std::int64_t Ho, std::int64_t Wo, Real* x) {
    const std::int64_t M = Ho * Wo;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c)
        for (std::int64_t kh = 0; kh < k; ++kh)
            for (std::int64_t kw = 0; kw < k; ++kw, ++row) {
                const Real* src = col + row * M;
                std::int64_t m = 0;
                for (std::int64_t oh = 0; oh < Ho; ++oh) {
                    const std::int64_t ih = oh * stride - pad + kh;
                    const bool h_ok = ih >= 0 && ih < H;
                    Real* dst = x + (c * H + ih) * W;
                    for (std::int64_t ow = 0; ow < Wo; ++ow, ++m) {
                        const std::int64_t iw = ow * stride - pad + kw;
                        if (h_ok && iw >= 0 && iw < W) dst[iw] += src[m];
                    }
                }
            }
}

}  // namespace detail

// x (B,Cin,H,W,D), weight (Cout,Cin,k,k,k), bias (Cout) -> (B,Cout,Ho,Wo,Do)
template <typename Real>
Var<Real> conv3d(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias, std::int64_t stride,
                 std::int64_t pad) {
    const auto& sx = x->value.shape();
    const auto& sw = weight->value.shape();
    if (sx.size() != 5 || sw.size() != 5 || sw[2] != sw[3] || sw[3] != sw[4])
        fail_shape("conv3d: bad shapes ", shape_str(sx), " weight ", shape_str(sw));
    if (sx[1] != sw[1]) fail_shape("conv3d: channel mismatch input ", sx[1], " vs weight ", sw[1]);
    const std::int64_t B = sx[0], Cin = sx[1], H = sx[2], W = sx[3], D = sx[4];
    const std::int64_t Cout = sw[0], k = sw[2];
    const std::int64_t Ho = detail::conv_out_extent(H, k, stride, pad);
    const std::int64_t Wo = detail::conv_out_extent(W, k, stride, pad);
    const std::int64_t Do = detail::conv_out_extent(D, k, stride, pad);
    const std::int64_t K = Cin * k * k * k;
    const std::int64_t M = Ho * Wo * Do;

    Tensor<Real> out({B, Cout, Ho, Wo, Do});
    {
        std::vector<Real> col(static_cast<std::size_t>(K * M));
        for (std::int64_t b = 0; b < B; ++b) {
            detail::im2col3d(x->value.data() + b * Cin * H * W * D, Cin, H, W, D, k, stride, pad, Ho, Wo, Do,
                             col.data());
            matmul_nn(out.data() + b * Cout * M, weight->value.data(), col.data(), Cout, K, M);
        }
    }
    if (bias) {
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < Cout; ++c) {
                Real* dst = out.data() + (b * Cout + c) * M;
                const Real bv = bias->value[c];
                for (std::int64_t m = 0; m < M; ++m) dst[m] += bv;
            }
    }

    std::vector<Var<Real>> parents = bias ? std::vector<Var<Real>>{x, weight, bias} : std::vector<Var<Real>>{x, weight};
    return attach<Real>(std::move(out), std::move(parents),
                        [x, weight, bias, B, Cin, H, W, D, Cout, k, stride, pad, Ho, Wo, Do, K, M](Node<Real>& o) {
        std::vector<Real> col(static_cast<std::size_t>(K * M));
        std::vector<Real> dcol;
        if (x->requires_grad) dcol.resize(static_cast<std::size_t>(K * M));
        for (std::int64_t b = 0; b < B; ++b) {
            const Real* gout = o.grad.data() + b * Cout * M;
            if (weight->requires_grad || x->requires_grad)
                detail::im2col3d(x->value.data() + b * Cin * H * W * D, Cin, H, W, D, k, stride, pad, Ho, Wo, Do,
                                 col.data());
            if (weight->requires_grad)
                matmul_nt(weight->ensure_grad().data(), gout, col.data(), Cout, M, K, true);
            if (x->requires_grad) {
                matmul_tn(dcol.data(), weight->value.data(), gout, K, Cout, M);
                detail::col2im3d(dcol.data(), Cin, H, W, D, k, stride, pad, Ho, Wo, Do,
                                 x->ensure_grad().data() + b * Cin * H * W * D);
            }
            if (bias && bias->requires_grad) {
                auto& gb = bias->ensure_grad();
                for (std::int64_t c = 0; c < Cout; ++c) {
                    const Real* row = gout + c * M;
                    Real acc = 0;
                    for (std::int64_t m = 0; m < M; ++m) acc += row[m];
                    gb[c] += acc;
                }
            }
        }
    });
}

// x (B,Cin,H,W), weight (Cout,Cin,k,k), bias (Cout) -> (B,Cout,Ho,Wo)
template <typename Real>
Var<Real> conv2d(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias, std::int64_t stride,
                 std::int64_t pad) {
    const auto& sx = x->value.shape();
    const auto& sw = weight->value.shape();
    if (sx.size() != 4 || sw.size() != 4 || sw[2] != sw[3])
        fail_shape("conv2d: bad shapes ", shape_str(sx), " weight ", shape_str(sw));
    if (sx[1] != sw[1]) fail_shape("conv2d: channel mismatch input ", sx[1], " vs weight ", sw[1]);
    const std::int64_t B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
    const std::int64_t Cout = sw[0], k = sw[2];
    const std::int64_t Ho = detail::conv_out_extent(H, k, stride, pad);
    const std::int64_t Wo = detail::conv_out_extent(W, k, stride, pad);
    const std::int64_t K = Cin * k * k;
    const std::int64_t M = Ho * Wo;

    Tensor<Real> out({B, Cout, Ho, Wo});
    {
        std::vector<Real> col(static_cast<std::size_t>(K * M));
        for (std::int64_t b = 0; b < B; ++b) {
            detail::im2col2d(x->value.data() + b * Cin * H * W, Cin, H, W, k, stride, pad, Ho, Wo, col.data());
            matmul_nn(out.data() + b * Cout * M, weight->value.data(), col.data(), Cout, K, M);
        }
    }
    if (bias) {
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < Cout; ++c) {
                Real* dst = out.data() + (b * Cout + c) * M;
                const Real bv = bias->value[c];
                for (std::int64_t m = 0; m < M; ++m) dst[m] += bv;
            }
    }

    std::vector<Var<Real>> parents = bias ? std::vector<Var<Real>>{x, weight, bias} : std::vector<Var<Real>>{x, weight};
    return attach<Real>(std::move(out), std::move(parents),
                        [x, weight, bias, B, Cin, H, W, Cout, k, stride, pad, Ho, Wo, K, M](Node<Real>& o) {
        std::vector<Real> col(static_cast<std::size_t>(K * M));
        std::vector<Real> dcol;
        if (x->requires_grad) dcol.resize(static_cast<std::size_t>(K * M));
        for (std::int64_t b = 0; b < B; ++b) {
            const Real* gout = o.grad.data() + b * Cout * M;
            if (weight->requires_grad || x->requires_grad)
                detail::im2col2d(x->value.data() + b * Cin * H * W, Cin, H, W, k, stride, pad, Ho, Wo, col.data());
            if (weight->requires_grad)
                matmul_nt(weight->ensure_grad().data(), gout, col.data(), Cout, M, K, true);
            if (x->requires_grad) {
                matmul_tn(dcol.data(), weight->value.data(), gout, K, Cout, M);
                detail::col2im2d(dcol.data(), Cin, H, W, k, stride, pad, Ho, Wo,
                                 x->ensure_grad().data() + b * Cin * H * W);
            }
            if (bias && bias->requires_grad) {
                auto& gb = bias->ensure_grad();
                for (std::int64_t c = 0; c < Cout; ++c) {
                    const Real* row = gout + c * M;
                    Real acc = 0;
                    for (std::int64_t m = 0; m < M; ++m) acc += row[m];
                    gb[c] += acc;
                }
            }
        }
    });
}

}  // namespace hva
