#pragma once

// Cross-view attention. One stream's features are refined on the other
// stream's native planes, with queries projected from that other stream and
// keys/values from the stream being refined. Both directions of a stage read
// the same post-IVA snapshot, so neither depends on the other's output.

#include "hva/attention.hpp"

namespace hva {

template <typename Real>
struct CVABlockParams {
    EPAParams<Real> epa;
    ResBlock2dParams<Real> refine;
};

template <typename Real>
CVABlockParams<Real> make_cva_block(ParamStore<Real>& store, const std::string& prefix, std::int64_t c,
                                    std::int64_t tokens, std::int64_t proj, Rng& rng) {
    CVABlockParams<Real> p;
    p.epa = make_epa_params(store, prefix + ".epa", c, tokens, proj, rng);
    p.refine = make_res_block2d(store, prefix + ".refine", c, rng);
    return p;
}

namespace detail {

// Queries come from one planar batch, keys/values and the residual path from
// the other; both share the block's normalization.
template <typename Real>
Var<Real> cross_attend_planes(const Var<Real>& refined_planes, const Var<Real>& query_planes,
                              const CVABlockParams<Real>& p) {
    if (!refined_planes->value.same_shape(query_planes->value))
        fail_shape("cross_attend_planes: stream shapes ", shape_str(refined_planes->value.shape()), " vs ",
                   shape_str(query_planes->value.shape()));
    const std::int64_t a1 = refined_planes->value.dim(2);
    const std::int64_t a2 = refined_planes->value.dim(3);
    const auto& epa = p.epa;
    auto q_tok = layer_norm_lastdim(planes_to_tokens(query_planes), epa.norm.gamma, epa.norm.beta);
    auto kv_tok = layer_norm_lastdim(planes_to_tokens(refined_planes), epa.norm.gamma, epa.norm.beta);
    auto q = linear(q_tok, epa.w_q, epa.b_q);
    auto k = linear(kv_tok, epa.w_k, epa.b_k);
    auto vs = linear(kv_tok, epa.w_vs, epa.b_vs);
    auto vc = linear(kv_tok, epa.w_vc, epa.b_vc);
    auto summed = add3(spatial_attention(q, k, vs, epa), channel_attention(q, k, vc, epa),
                       planes_to_tokens(refined_planes));
    return res_block2d(tokens_to_planes(summed, a1, a2), p.refine);
}

}  // namespace detail

// Refines the transverse stream on sagittal planes with sagittal queries.
template <typename Real>
Var<Real> cva_refine_transverse(const Var<Real>& f_t, const Var<Real>& f_s, const CVABlockParams<Real>& p) {
    if (!f_t->value.same_shape(f_s->value))
        fail_shape("cva_refine_transverse: stream shapes ", shape_str(f_t->value.shape()), " vs ",
                   shape_str(f_s->value.shape()));
    const ParentDims parent{f_t->value.dim(0), f_t->value.dim(2), f_t->value.dim(3), f_t->value.dim(4)};
    auto refined = detail::cross_attend_planes(to_sagittal_planes_v(f_t), to_sagittal_planes_v(f_s), p);
    return from_planes_v(refined, PlaneOrigin::sagittal_planes, parent);
}

// Mirror direction: the sagittal stream is refined on transverse planes with
// transverse queries.
template <typename Real>
Var<Real> cva_refine_sagittal(const Var<Real>& f_t, const Var<Real>& f_s, const CVABlockParams<Real>& p) {
    if (!f_t->value.same_shape(f_s->value))
        fail_shape("cva_refine_sagittal: stream shapes ", shape_str(f_t->value.shape()), " vs ",
                   shape_str(f_s->value.shape()));
    const ParentDims parent{f_s->value.dim(0), f_s->value.dim(2), f_s->value.dim(3), f_s->value.dim(4)};
    auto refined = detail::cross_attend_planes(to_transverse_planes_v(f_s), to_transverse_planes_v(f_t), p);
    return from_planes_v(refined, PlaneOrigin::transverse_planes, parent);
}

template <typename Real>
struct StagePair {
    Var<Real> t, s;
};

template <typename Real>
StagePair<Real> hva_stage(const Var<Real>& f_t, const Var<Real>& f_s, const IVABlockParams<Real>& iva_t,
                          const IVABlockParams<Real>& iva_s, const CVABlockParams<Real>& cva_t,
                          const CVABlockParams<Real>& cva_s) {
    auto g_t = iva_forward(f_t, View::transverse, iva_t);
    auto g_s = iva_forward(f_s, View::sagittal, iva_s);
    return {cva_refine_transverse(g_t, g_s, cva_t), cva_refine_sagittal(g_t, g_s, cva_s)};
}

}  // namespace hva
