#pragma once

// Intra-view attention. Each imaging plane of a view attends to itself with
// paired spatial and channel attention driven by shared queries and keys:
//
//   spatial:  softmax(Q Kp^T / gamma_s) Vp   with Kp = E_K K, Vp = E_V Vs
//   channel:  Vc softmax(Q^T K / gamma_c)
//
// Both branches plus the raw planar input are summed and refined by a
// plane-local residual block.

#include <cstdint>
#include <string>

#include "hva/blocks.hpp"
#include "hva/ops_pool.hpp"
#include "hva/views.hpp"

namespace hva {

template <typename Real>
struct EPAParams {
    NormParams<Real> norm;                    // per-token channel norm before the projections
    Var<Real> w_q, b_q, w_k, b_k;             // shared query/key maps, C -> C
    Var<Real> w_vs, b_vs, w_vc, b_vc;         // spatial / channel value maps, C -> C
    Var<Real> e_k, e_v;                       // token projections, (P, N)
    Var<Real> gamma_s, gamma_c;               // learnable temperatures
    std::int64_t channels = 0, tokens = 0, proj = 0;
};

template <typename Real>
EPAParams<Real> make_epa_params(ParamStore<Real>& store, const std::string& prefix, std::int64_t c,
                                std::int64_t tokens, std::int64_t proj, Rng& rng) {
    if (proj < 1 || proj > tokens)
        fail_shape("make_epa_params: proj dim ", proj, " outside [1, ", tokens, "]");
    EPAParams<Real> p;
    p.channels = c;
    p.tokens = tokens;
    p.proj = proj;
    p.norm = make_norm_params(store, prefix + ".norm", c);
    const Real stddev = std::sqrt(Real(1) / Real(c));
    auto lin = [&](const char* name, Var<Real>& w, Var<Real>& b) {
        w = store.add(prefix + "." + name + ".w", random_normal<Real>({c, c}, rng, stddev));
        b = store.add(prefix + "." + name + ".b", Tensor<Real>::zeros({c}));
    };
    lin("q", p.w_q, p.b_q);
    lin("k", p.w_k, p.b_k);
    lin("vs", p.w_vs, p.b_vs);
    lin("vc", p.w_vc, p.b_vc);
    p.e_k = store.add(prefix + ".e_k", orthogonal_rows<Real>(proj, tokens, rng));
    p.e_v = store.add(prefix + ".e_v", orthogonal_rows<Real>(proj, tokens, rng));
    p.gamma_s = store.add(prefix + ".gamma_s", Tensor<Real>::scalar(std::sqrt(Real(c))));
    p.gamma_c = store.add(prefix + ".gamma_c", Tensor<Real>::scalar(std::sqrt(Real(c))));
    return p;
}

template <typename Real>
struct EpaProjections {
    Var<Real> q, k, vs, vc;  // each (B', N, C)
};

// Normalizes each token over channels, then applies the four linear maps.
template <typename Real>
EpaProjections<Real> epa_project(const Var<Real>& planes, const EPAParams<Real>& p) {
    if (planes->value.rank() != 4 || planes->value.dim(1) != p.channels)
        fail_shape("epa_project: planar input ", shape_str(planes->value.shape()), " does not match ",
                   p.channels, " channels");
    const std::int64_t n = planes->value.dim(2) * planes->value.dim(3);
    if (n != p.tokens)
        fail_shape("epa_project: plane has ", n, " tokens, params built for ", p.tokens);
    auto tok = layer_norm_lastdim(planes_to_tokens(planes), p.norm.gamma, p.norm.beta);
    EpaProjections<Real> out;
    out.q = linear(tok, p.w_q, p.b_q);
    out.k = linear(tok, p.w_k, p.b_k);
    out.vs = linear(tok, p.w_vs, p.b_vs);
    out.vc = linear(tok, p.w_vc, p.b_vc);
    return out;
}

template <typename Real>
Var<Real> spatial_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& vs,
                            const EPAParams<Real>& p) {
    auto k_proj = project_tokens(k, p.e_k);                        // (B', P, C)
    auto v_proj = project_tokens(vs, p.e_v);
    auto logits = div_by_scalar(bmm(q, transpose_last2(k_proj)), p.gamma_s);  // (B', N, P)
    return bmm(softmax_lastdim(logits), v_proj);
}

template <typename Real>
Var<Real> channel_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& vc,
                            const EPAParams<Real>& p) {
    auto logits = div_by_scalar(bmm(transpose_last2(q), k), p.gamma_c);  // (B', C, C)
    return bmm(vc, softmax_lastdim(logits));
}

template <typename Real>
struct IVABlockParams {
    EPAParams<Real> epa;
    ResBlock2dParams<Real> refine;
};

template <typename Real>
IVABlockParams<Real> make_iva_block(ParamStore<Real>& store, const std::string& prefix, std::int64_t c,
                                    std::int64_t tokens, std::int64_t proj, Rng& rng) {
    IVABlockParams<Real> p;
    p.epa = make_epa_params(store, prefix + ".epa", c, tokens, proj, rng);
    p.refine = make_res_block2d(store, prefix + ".refine", c, rng);
    return p;
}

template <typename Real>
Var<Real> iva_forward(const Var<Real>& f, View view, const IVABlockParams<Real>& p) {
    if (f->value.rank() != 5)
        fail_shape("iva_forward: expected rank-5 input, got ", shape_str(f->value.shape()));
    const ParentDims parent{f->value.dim(0), f->value.dim(2), f->value.dim(3), f->value.dim(4)};
    auto planes = view == View::transverse ? to_transverse_planes_v(f) : to_sagittal_planes_v(f);
    const std::int64_t a1 = planes->value.dim(2);
    const std::int64_t a2 = planes->value.dim(3);
    auto proj = epa_project(planes, p.epa);
    auto summed = add3(spatial_attention(proj.q, proj.k, proj.vs, p.epa),
                       channel_attention(proj.q, proj.k, proj.vc, p.epa), planes_to_tokens(planes));
    auto refined = res_block2d(tokens_to_planes(summed, a1, a2), p.refine);
    return from_planes_v(refined, planes_of(view), parent);
}

}  // namespace hva
