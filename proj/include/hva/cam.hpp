#pragma once

// Gradient-weighted class activation maps. The logit's gradient w.r.t. a
// chosen stage's per-stream features yields per-channel weights; the weighted
// channel sum is rectified, min-max normalized and upsampled to input size.

#include <array>

#include "hva/checkpoint.hpp"
#include "hva/data.hpp"
#include "hva/network.hpp"

namespace hva {

template <typename Real>
struct CamResult {
    Tensor<Real> map_t, map_s;  // (H,W,D) in [0,1]; empty when the view is disabled
};

namespace detail {

template <typename Real>
Tensor<Real> cam_from_feature(const Var<Real>& feature, const std::array<std::int64_t, 3>& out_size) {
    const auto& val = feature->value;  // (1, C, h, w, d)
    if (feature->grad.empty()) fail_shape("cam: stage feature has no gradient");
    const std::int64_t c = val.dim(1), h = val.dim(2), w = val.dim(3), d = val.dim(4);
    const std::int64_t voxels = h * w * d;

    Tensor<Real> map({h, w, d});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double weight = 0;
        const std::int64_t base = ch * voxels;
        for (std::int64_t v = 0; v < voxels; ++v) weight += feature->grad[base + v];
        weight /= static_cast<double>(voxels);
        for (std::int64_t v = 0; v < voxels; ++v)
            map[v] += static_cast<Real>(weight * static_cast<double>(val[base + v]));
    }
    for (std::int64_t v = 0; v < voxels; ++v) map[v] = std::max(map[v], Real(0));
    Real lo = map[0], hi = map[0];
    for (std::int64_t v = 1; v < voxels; ++v) {
        lo = std::min(lo, map[v]);
        hi = std::max(hi, map[v]);
    }
    if (hi > lo)
        for (std::int64_t v = 0; v < voxels; ++v) map[v] = (map[v] - lo) / (hi - lo);
    else
        map.fill(Real(0));
    return resize_volume(map, out_size);
}

}  // namespace detail

// Maps for one case; volumes are single-case (1,1,H,W,D) or (H,W,D).
template <typename Real>
CamResult<Real> cam(const Model<Real>& model, Tensor<Real> v_t, Tensor<Real> v_s, int stage = 4) {
    if (stage < 1 || stage > 4) throw data_error(str_cat("cam: stage must be in [1,4], got ", stage));
    const auto& cfg = model.config;
    const auto lift = [&](Tensor<Real>& v) {
        if (v.numel() == 0) return;
        if (v.rank() == 3) v = v.reshaped({1, 1, v.dim(0), v.dim(1), v.dim(2)});
        if (v.rank() != 5 || v.dim(0) != 1)
            fail_shape("cam: expected one case, got ", shape_str(v.shape()));
    };
    lift(v_t);
    lift(v_s);

    Var<Real> vt = v_t.numel() > 0 ? make_constant(v_t) : Var<Real>{};
    Var<Real> vs = v_s.numel() > 0 ? make_constant(v_s) : Var<Real>{};
    auto trace = forward_trace(model, vt, vs);
    backward(trace.logit);

    CamResult<Real> out;
    const std::size_t idx = static_cast<std::size_t>(stage - 1);
    if (trace.stage_t[idx]) out.map_t = detail::cam_from_feature(trace.stage_t[idx], cfg.input_size);
    if (trace.stage_s[idx]) out.map_s = detail::cam_from_feature(trace.stage_s[idx], cfg.input_size);
    return out;
}

template <typename Real>
CamResult<Real> cam(const Checkpoint<Real>& ck, const CasePair<Real>& case_pair, int stage = 4) {
    auto model = model_from_checkpoint(ck);
    const auto [h, w, d] = model.config.input_size;
    const auto fit = [&](const Tensor<Real>& v) {
        if (v.numel() == 0) return v;
        return v.shape() == Shape{h, w, d} ? v : resize_volume(v, {h, w, d});
    };
    return cam(model, fit(case_pair.vol_t), fit(case_pair.vol_s), stage);
}

}  // namespace hva
