#pragma once

// Hybrid-view adaptive fusion: a channel gate over the concatenated streams
// driven by pooled statistics through a shared bottleneck MLP, then a spatial
// gate applied to each view's half with one shared 3x3x3 convolution.

#include "hva/blocks.hpp"
#include "hva/ops_pool.hpp"

namespace hva {

template <typename Real>
struct HVAFParams {
    Var<Real> mlp_w1, mlp_b1;  // 2C -> 2C/r
    Var<Real> mlp_w2, mlp_b2;  // 2C/r -> 2C
    ConvParams<Real> conv_s;   // 2 -> 1, 3x3x3
    std::int64_t channels = 0;  // per view
    std::int64_t r = 16;
};

template <typename Real>
HVAFParams<Real> make_hvaf_params(ParamStore<Real>& store, const std::string& prefix, std::int64_t c,
                                  std::int64_t r, Rng& rng) {
    if (r < 1 || (2 * c) % r != 0)
        fail_shape("make_hvaf_params: reduction ", r, " must divide ", 2 * c);
    HVAFParams<Real> p;
    p.channels = c;
    p.r = r;
    const std::int64_t hidden = 2 * c / r;
    p.mlp_w1 = store.add(prefix + ".mlp1.w",
                         random_normal<Real>({hidden, 2 * c}, rng, std::sqrt(Real(2) / Real(2 * c))));
    p.mlp_b1 = store.add(prefix + ".mlp1.b", Tensor<Real>::zeros({hidden}));
    p.mlp_w2 = store.add(prefix + ".mlp2.w",
                         random_normal<Real>({2 * c, hidden}, rng, std::sqrt(Real(2) / Real(hidden))));
    p.mlp_b2 = store.add(prefix + ".mlp2.b", Tensor<Real>::zeros({2 * c}));
    p.conv_s = make_conv3d_params(store, prefix + ".conv_s", 2, 1, 3, rng);
    return p;
}

namespace detail {

template <typename Real>
Var<Real> hvaf_mlp(const Var<Real>& pooled, const HVAFParams<Real>& p) {
    return linear(relu(linear(pooled, p.mlp_w1, p.mlp_b1)), p.mlp_w2, p.mlp_b2);
}

}  // namespace detail

template <typename Real>
Var<Real> channel_gate(const Var<Real>& f_t, const Var<Real>& f_s, const HVAFParams<Real>& p) {
    if (!f_t->value.same_shape(f_s->value))
        fail_shape("channel_gate: stream shapes ", shape_str(f_t->value.shape()), " vs ",
                   shape_str(f_s->value.shape()));
    if (f_t->value.dim(1) != p.channels)
        fail_shape("channel_gate: got ", f_t->value.dim(1), " channels, params built for ", p.channels);
    auto cat = concat_channels(f_t, f_s);
    auto gate = sigmoid(add(detail::hvaf_mlp(global_avg_pool(cat), p),
                            detail::hvaf_mlp(global_max_pool(cat), p)));
    return mul_channel_gate(cat, gate);
}

template <typename Real>
Var<Real> spatial_gate(const Var<Real>& f_view, const HVAFParams<Real>& p) {
    if (f_view->value.dim(1) != p.channels)
        fail_shape("spatial_gate: got ", f_view->value.dim(1), " channels, params built for ", p.channels);
    auto stacked = concat_channels(channel_avg_pool(f_view), channel_max_pool(f_view));
    auto gate = sigmoid(conv3d(stacked, p.conv_s.w, p.conv_s.b, 1, 1));
    return mul_spatial_gate(f_view, gate);
}

template <typename Real>
Var<Real> hvaf_forward(const Var<Real>& f_t, const Var<Real>& f_s, const HVAFParams<Real>& p) {
    auto fused = channel_gate(f_t, f_s, p);
    auto half_t = slice_channels(fused, 0, p.channels);
    auto half_s = slice_channels(fused, p.channels, 2 * p.channels);
    return concat_channels(spatial_gate(half_t, p), spatial_gate(half_s, p));
}

}  // namespace hva
