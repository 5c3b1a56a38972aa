#pragma once

#include "hva/autodiff.hpp"

// View geometry. Feature maps are (B,C,H,W,D); the transverse plane is (H,W)
// with imaging axis D, the sagittal plane is (W,D) with imaging axis H.
// Merging a view's imaging axis into the batch keeps the imaging index
// fastest-varying within each original batch element: plane d of element b
// lands at flat index b*D + d (transverse), b*H + h (sagittal).

namespace hva {

enum class PlaneOrigin { transverse_planes, sagittal_planes };

enum class View { transverse, sagittal };

inline PlaneOrigin planes_of(View v) {
    return v == View::transverse ? PlaneOrigin::transverse_planes : PlaneOrigin::sagittal_planes;
}

template <typename Real>
struct FeatureMap5D {
    Tensor<Real> data;  // (B,C,H,W,D)

    FeatureMap5D() = default;
    explicit FeatureMap5D(Tensor<Real> t) : data(std::move(t)) {
        if (data.rank() != 5) fail_shape("FeatureMap5D: expected rank 5, got ", shape_str(data.shape()));
    }

    std::int64_t b() const { return data.dim(0); }
    std::int64_t c() const { return data.dim(1); }
    std::int64_t h() const { return data.dim(2); }
    std::int64_t w() const { return data.dim(3); }
    std::int64_t d() const { return data.dim(4); }
};

struct ParentDims {
    std::int64_t b, h, w, d;
};

template <typename Real>
struct PlanarBatch {
    Tensor<Real> data;  // (B', C, A1, A2)
    PlaneOrigin origin = PlaneOrigin::transverse_planes;
    ParentDims parent{};
};

namespace detail {

template <typename Real>
void scatter_transverse(const Real* in, Real* out, std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                        std::int64_t D, bool forward) {
    // planar layout: (B*D, C, H, W); flat planar index ((b*D+d)*C + c)*H*W + h*W + w
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w) {
                    const std::int64_t base5 = (((b * C + c) * H + h) * W + w) * D;
                    for (std::int64_t d = 0; d < D; ++d) {
                        const std::int64_t planar = (((b * D + d) * C + c) * H + h) * W + w;
                        if (forward)
                            out[planar] = in[base5 + d];
                        else
                            out[base5 + d] = in[planar];
                    }
                }
}

template <typename Real>
void scatter_sagittal(const Real* in, Real* out, std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                      std::int64_t D, bool forward) {
    // planar layout: (B*H, C, W, D)
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w) {
                    const std::int64_t base5 = (((b * C + c) * H + h) * W + w) * D;
                    const std::int64_t planar = (((b * H + h) * C + c) * W + w) * D;
                    for (std::int64_t d = 0; d < D; ++d) {
                        if (forward)
                            out[planar + d] = in[base5 + d];
                        else
                            out[base5 + d] = in[planar + d];
                    }
                }
}

}  // namespace detail

template <typename Real>
PlanarBatch<Real> to_transverse_planes(const FeatureMap5D<Real>& f) {
    const std::int64_t B = f.b(), C = f.c(), H = f.h(), W = f.w(), D = f.d();
    PlanarBatch<Real> p;
    p.data = Tensor<Real>({B * D, C, H, W});
    p.origin = PlaneOrigin::transverse_planes;
    p.parent = {B, H, W, D};
    detail::scatter_transverse(f.data.data(), p.data.data(), B, C, H, W, D, true);
    return p;
}

template <typename Real>
PlanarBatch<Real> to_sagittal_planes(const FeatureMap5D<Real>& f) {
    const std::int64_t B = f.b(), C = f.c(), H = f.h(), W = f.w(), D = f.d();
    PlanarBatch<Real> p;
    p.data = Tensor<Real>({B * H, C, W, D});
    p.origin = PlaneOrigin::sagittal_planes;
    p.parent = {B, H, W, D};
    detail::scatter_sagittal(f.data.data(), p.data.data(), B, C, H, W, D, true);
    return p;
}

template <typename Real>
FeatureMap5D<Real> from_planes(const PlanarBatch<Real>& p) {
    const auto [B, H, W, D] = p.parent;
    const std::int64_t C = p.data.dim(1);
    const Shape expected = p.origin == PlaneOrigin::transverse_planes ? Shape{B * D, C, H, W}
                                                                      : Shape{B * H, C, W, D};
    if (p.data.shape() != expected)
        fail_shape("from_planes: data ", shape_str(p.data.shape()), " inconsistent with parent dims, expected ",
                   shape_str(expected));
    FeatureMap5D<Real> f(Tensor<Real>({B, C, H, W, D}));
    if (p.origin == PlaneOrigin::transverse_planes)
        detail::scatter_transverse(p.data.data(), f.data.data(), B, C, H, W, D, false);
    else
        detail::scatter_sagittal(p.data.data(), f.data.data(), B, C, H, W, D, false);
    return f;
}

// tape versions operating on (B,C,H,W,D) nodes

template <typename Real>
Var<Real> to_transverse_planes_v(const Var<Real>& f) {
    const auto& s = f->value.shape();
    if (s.size() != 5) fail_shape("to_transverse_planes_v: expected rank 5, got ", shape_str(s));
    const std::int64_t B = s[0], C = s[1], H = s[2], W = s[3], D = s[4];
    Tensor<Real> out({B * D, C, H, W});
    detail::scatter_transverse(f->value.data(), out.data(), B, C, H, W, D, true);
    return attach<Real>(std::move(out), {f}, [f, B, C, H, W, D](Node<Real>& o) {
        auto& gf = f->ensure_grad();
        Tensor<Real> tmp(gf.shape());
        detail::scatter_transverse(o.grad.data(), tmp.data(), B, C, H, W, D, false);
        for (std::int64_t i = 0; i < gf.numel(); ++i) gf[i] += tmp[i];
    });
}

template <typename Real>
Var<Real> to_sagittal_planes_v(const Var<Real>& f) {
    const auto& s = f->value.shape();
    if (s.size() != 5) fail_shape("to_sagittal_planes_v: expected rank 5, got ", shape_str(s));
    const std::int64_t B = s[0], C = s[1], H = s[2], W = s[3], D = s[4];
    Tensor<Real> out({B * H, C, W, D});
    detail::scatter_sagittal(f->value.data(), out.data(), B, C, H, W, D, true);
    return attach<Real>(std::move(out), {f}, [f, B, C, H, W, D](Node<Real>& o) {
        auto& gf = f->ensure_grad();
        Tensor<Real> tmp(gf.shape());
        detail::scatter_sagittal(o.grad.data(), tmp.data(), B, C, H, W, D, false);
        for (std::int64_t i = 0; i < gf.numel(); ++i) gf[i] += tmp[i];
    });
}

template <typename Real>
Var<Real> from_planes_v(const Var<Real>& p, PlaneOrigin origin, ParentDims parent) {
    const auto [B, H, W, D] = parent;
    const std::int64_t C = p->value.dim(1);
    Tensor<Real> out({B, C, H, W, D});
    if (origin == PlaneOrigin::transverse_planes) {
        if (p->value.shape() != Shape{B * D, C, H, W})
            fail_shape("from_planes_v: planar shape ", shape_str(p->value.shape()), " inconsistent with parent dims");
        detail::scatter_transverse(p->value.data(), out.data(), B, C, H, W, D, false);
    } else {
        if (p->value.shape() != Shape{B * H, C, W, D})
            fail_shape("from_planes_v: planar shape ", shape_str(p->value.shape()), " inconsistent with parent dims");
        detail::scatter_sagittal(p->value.data(), out.data(), B, C, H, W, D, false);
    }
    return attach<Real>(std::move(out), {p}, [p, origin, B, C, H, W, D](Node<Real>& o) {
        auto& gp = p->ensure_grad();
        Tensor<Real> tmp(gp.shape());
        if (origin == PlaneOrigin::transverse_planes)
            detail::scatter_transverse(o.grad.data(), tmp.data(), B, C, H, W, D, true);
        else
            detail::scatter_sagittal(o.grad.data(), tmp.data(), B, C, H, W, D, true);
        for (std::int64_t i = 0; i < gp.numel(); ++i) gp[i] += tmp[i];
    });
}

}  // namespace hva
