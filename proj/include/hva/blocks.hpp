#pragma once

// Parameter bundles and the small conv blocks the encoder is assembled from.
// Construction helpers register every tensor in a ParamStore under a
// dotted prefix so checkpoints can address them by name.

#include <cstdint>
#include <optional>
#include <utility>

#include "hva/autodiff.hpp"
#include "hva/ops_basic.hpp"
#include "hva/ops_conv.hpp"
#include "hva/ops_norm.hpp"
#include "hva/tensor.hpp"

namespace hva {

template <typename Real>
struct ConvParams {
    Var<Real> w;
    Var<Real> b;
};

template <typename Real>
struct NormParams {
    Var<Real> gamma;
    Var<Real> beta;
};

template <typename Real>
ConvParams<Real> make_conv3d_params(ParamStore<Real>& store, const std::string& prefix, std::int64_t cin,
                                    std::int64_t cout, std::int64_t k, Rng& rng) {
    const Real stddev = std::sqrt(Real(2) / Real(cin * k * k * k));
    ConvParams<Real> p;
    p.w = store.add(prefix + ".w", random_normal<Real>({cout, cin, k, k, k}, rng, stddev));
    p.b = store.add(prefix + ".b", Tensor<Real>::zeros({cout}));
    return p;
}

template <typename Real>
ConvParams<Real> make_conv2d_params(ParamStore<Real>& store, const std::string& prefix, std::int64_t cin,
                                    std::int64_t cout, std::int64_t k, Rng& rng) {
    const Real stddev = std::sqrt(Real(2) / Real(cin * k * k));
    ConvParams<Real> p;
    p.w = store.add(prefix + ".w", random_normal<Real>({cout, cin, k, k}, rng, stddev));
    p.b = store.add(prefix + ".b", Tensor<Real>::zeros({cout}));
    return p;
}

template <typename Real>
NormParams<Real> make_norm_params(ParamStore<Real>& store, const std::string& prefix, std::int64_t c) {
    NormParams<Real> p;
    p.gamma = store.add(prefix + ".gamma", Tensor<Real>::full({c}, Real(1)));
    p.beta = store.add(prefix + ".beta", Tensor<Real>::zeros({c}));
    return p;
}

// Two 3x3x3 convolutions with group norm; the skip is projected through a
// 1x1x1 convolution only when the channel count changes. No activation after
// the sum, so a zero second convolution makes the block an exact identity.
template <typename Real>
struct ResBlock3dParams {
    ConvParams<Real> conv1, conv2;
    NormParams<Real> norm1, norm2;
    std::optional<ConvParams<Real>> proj;
    std::int64_t cin = 0, cout = 0;
};

template <typename Real>
ResBlock3dParams<Real> make_res_block3d(ParamStore<Real>& store, const std::string& prefix, std::int64_t cin,
                                        std::int64_t cout, Rng& rng) {
    ResBlock3dParams<Real> p;
    p.cin = cin;
    p.cout = cout;
    p.conv1 = make_conv3d_params(store, prefix + ".conv1", cin, cout, 3, rng);
    p.norm1 = make_norm_params(store, prefix + ".norm1", cout);
    p.conv2 = make_conv3d_params(store, prefix + ".conv2", cout, cout, 3, rng);
    p.norm2 = make_norm_params(store, prefix + ".norm2", cout);
    if (cin != cout) p.proj = make_conv3d_params(store, prefix + ".proj", cin, cout, 1, rng);
    return p;
}

template <typename Real>
Var<Real> res_block3d(const Var<Real>& x, const ResBlock3dParams<Real>& p) {
    const std::int64_t g = groups_for_channels(p.cout);
    auto h = relu(group_norm(conv3d(x, p.conv1.w, p.conv1.b, 1, 1), p.norm1.gamma, p.norm1.beta, g));
    h = group_norm(conv3d(h, p.conv2.w, p.conv2.b, 1, 1), p.norm2.gamma, p.norm2.beta, g);
    auto skip = p.proj ? conv3d(x, p.proj->w, p.proj->b, 1, 0) : x;
    return add(skip, h);
}

// Plane-local counterpart used to refine attention outputs. Keeping the
// kernel two-dimensional means the refinement never mixes voxels across the
// plane batch, which the slice-permutation properties rely on.
template <typename Real>
struct ResBlock2dParams {
    ConvParams<Real> conv1, conv2;
    NormParams<Real> norm1, norm2;
    std::int64_t channels = 0;
};

template <typename Real>
ResBlock2dParams<Real> make_res_block2d(ParamStore<Real>& store, const std::string& prefix, std::int64_t c,
                                        Rng& rng) {
    ResBlock2dParams<Real> p;
    p.channels = c;
    p.conv1 = make_conv2d_params(store, prefix + ".conv1", c, c, 3, rng);
    p.norm1 = make_norm_params(store, prefix + ".norm1", c);
    p.conv2 = make_conv2d_params(store, prefix + ".conv2", c, c, 3, rng);
    p.norm2 = make_norm_params(store, prefix + ".norm2", c);
    return p;
}

template <typename Real>
Var<Real> res_block2d(const Var<Real>& x, const ResBlock2dParams<Real>& p) {
    const std::int64_t g = groups_for_channels(p.channels);
    auto h = relu(group_norm(conv2d(x, p.conv1.w, p.conv1.b, 1, 1), p.norm1.gamma, p.norm1.beta, g));
    h = group_norm(conv2d(h, p.conv2.w, p.conv2.b, 1, 1), p.norm2.gamma, p.norm2.beta, g);
    return add(x, h);
}

// Stride-2 convolution followed by norm and activation; used for the stem
// and for each stage entry.
template <typename Real>
struct DownsampleParams {
    ConvParams<Real> conv;
    NormParams<Real> norm;
    std::int64_t cout = 0;
};

template <typename Real>
DownsampleParams<Real> make_downsample(ParamStore<Real>& store, const std::string& prefix, std::int64_t cin,
                                       std::int64_t cout, Rng& rng) {
    DownsampleParams<Real> p;
    p.cout = cout;
    p.conv = make_conv3d_params(store, prefix + ".conv", cin, cout, 3, rng);
    p.norm = make_norm_params(store, prefix + ".norm", cout);
    return p;
}

template <typename Real>
Var<Real> downsample(const Var<Real>& x, const DownsampleParams<Real>& p) {
    return relu(group_norm(conv3d(x, p.conv.w, p.conv.b, 2, 1), p.norm.gamma, p.norm.beta,
                           groups_for_channels(p.cout)));
}

}  // namespace hva
