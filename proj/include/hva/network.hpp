#pragma once

// Full model assembly: per-view stem + four downsampling stages with optional
// attention, fusion of the two streams, and a pooled linear head producing one
// logit per case. A ModelConfig fully determines the parameter set, so
// checkpoints only need the config plus named tensors.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hva/blocks.hpp"
#include "hva/cross_view.hpp"
#include "hva/fusion.hpp"

namespace hva {

struct ModelConfig {
    std::array<std::int64_t, 3> input_size{128, 128, 128};  // (H, W, D)
    std::vector<std::int64_t> stage_channels{32, 64, 128, 256};
    std::vector<std::int64_t> p_per_stage{64, 64, 64, 64};  // clamped to the token count per block
    bool use_transverse = true;
    bool use_sagittal = true;
    bool use_iva = true;
    bool use_cva = true;
    bool use_hvaf = true;
    std::string head = "gap_linear";
    std::int64_t r = 16;
    std::uint64_t seed = 0;

    bool dual_view() const { return use_transverse && use_sagittal; }

    void validate() const {
        if (!use_transverse && !use_sagittal) throw data_error("ModelConfig: at least one view must be enabled");
        if (use_cva && !dual_view()) throw data_error("ModelConfig: use_cva requires both views");
        if (use_hvaf && !dual_view()) throw data_error("ModelConfig: use_hvaf requires both views");
        for (const auto e : input_size)
            if (e < 32 || e % 32 != 0)
                throw data_error(str_cat("ModelConfig: input extent ", e, " must be a positive multiple of 32"));
        if (stage_channels.size() != 4 || p_per_stage.size() != 4)
            throw data_error("ModelConfig: stage_channels and p_per_stage must have 4 entries");
        for (const auto c : stage_channels)
            if (c < 2) throw data_error("ModelConfig: stage channels must be >= 2");
        if (stage_channels[0] % 2 != 0) throw data_error("ModelConfig: stage_channels[0] must be even");
        for (const auto p : p_per_stage)
            if (p < 1) throw data_error("ModelConfig: p_per_stage entries must be >= 1");
        if (head != "gap_linear") throw data_error(str_cat("ModelConfig: unknown head '", head, "'"));
        if (r < 1 || (2 * stage_channels[3]) % r != 0)
            throw data_error(str_cat("ModelConfig: r = ", r, " must divide ", 2 * stage_channels[3]));
    }

    // Spatial extents after the stem and stage 1..(i+1) halvings, i in [0,4).
    std::array<std::int64_t, 3> stage_dims(std::int64_t i) const {
        return {input_size[0] >> (i + 2), input_size[1] >> (i + 2), input_size[2] >> (i + 2)};
    }
    std::int64_t tokens_transverse(std::int64_t i) const {
        const auto d = stage_dims(i);
        return d[0] * d[1];
    }
    std::int64_t tokens_sagittal(std::int64_t i) const {
        const auto d = stage_dims(i);
        return d[1] * d[2];
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"input_size", c.input_size},
                       {"stage_channels", c.stage_channels},
                       {"p_per_stage", c.p_per_stage},
                       {"use_transverse", c.use_transverse},
                       {"use_sagittal", c.use_sagittal},
                       {"use_iva", c.use_iva},
                       {"use_cva", c.use_cva},
                       {"use_hvaf", c.use_hvaf},
                       {"head", c.head},
                       {"r", c.r},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    const ModelConfig defaults;
    c.input_size = j.value("input_size", defaults.input_size);
    c.stage_channels = j.value("stage_channels", defaults.stage_channels);
    c.p_per_stage = j.value("p_per_stage", defaults.p_per_stage);
    c.use_transverse = j.value("use_transverse", defaults.use_transverse);
    c.use_sagittal = j.value("use_sagittal", defaults.use_sagittal);
    c.use_iva = j.value("use_iva", defaults.use_iva);
    c.use_cva = j.value("use_cva", defaults.use_cva);
    c.use_hvaf = j.value("use_hvaf", defaults.use_hvaf);
    c.head = j.value("head", defaults.head);
    c.r = j.value("r", defaults.r);
    c.seed = j.value("seed", defaults.seed);
}

template <typename Real>
struct StreamStageParams {
    DownsampleParams<Real> down;
    ResBlock3dParams<Real> block1, block2;
    std::optional<IVABlockParams<Real>> iva;
};

template <typename Real>
struct StreamParams {
    DownsampleParams<Real> stem;
    std::array<StreamStageParams<Real>, 4> stages;
};

template <typename Real>
struct CrossStageParams {
    std::optional<CVABlockParams<Real>> t, s;
};

template <typename Real>
struct Model {
    ModelConfig config;
    ParamStore<Real> params;
    std::optional<StreamParams<Real>> t, s;
    std::array<CrossStageParams<Real>, 4> cross;
    std::optional<HVAFParams<Real>> hvaf;
    Var<Real> head_w, head_b;
};

template <typename Real>
Model<Real> build(const ModelConfig& cfg) {
    cfg.validate();
    Model<Real> m;
    m.config = cfg;
    Rng rng(cfg.seed);

    auto build_stream = [&](const std::string& name, View view) {
        StreamParams<Real> sp;
        sp.stem = make_downsample(m.params, name + ".stem", 1, cfg.stage_channels[0] / 2, rng);
        std::int64_t cin = cfg.stage_channels[0] / 2;
        for (std::int64_t i = 0; i < 4; ++i) {
            const std::string pre = str_cat(name, ".stage", i + 1);
            const std::int64_t cout = cfg.stage_channels[static_cast<std::size_t>(i)];
            auto& st = sp.stages[static_cast<std::size_t>(i)];
            st.down = make_downsample(m.params, pre + ".down", cin, cout, rng);
            st.block1 = make_res_block3d(m.params, pre + ".block1", cout, cout, rng);
            st.block2 = make_res_block3d(m.params, pre + ".block2", cout, cout, rng);
            if (cfg.use_iva) {
                const std::int64_t tokens =
                    view == View::transverse ? cfg.tokens_transverse(i) : cfg.tokens_sagittal(i);
                const std::int64_t p = std::min(cfg.p_per_stage[static_cast<std::size_t>(i)], tokens);
                st.iva = make_iva_block(m.params, pre + ".iva", cout, tokens, p, rng);
            }
            cin = cout;
        }
        return sp;
    };

    if (cfg.use_transverse) m.t = build_stream("t", View::transverse);
    if (cfg.use_sagittal) m.s = build_stream("s", View::sagittal);

    if (cfg.use_cva) {
        for (std::int64_t i = 0; i < 4; ++i) {
            const std::int64_t c = cfg.stage_channels[static_cast<std::size_t>(i)];
            const std::int64_t p_cfg = cfg.p_per_stage[static_cast<std::size_t>(i)];
            auto& cs = m.cross[static_cast<std::size_t>(i)];
            // The transverse stream is refined on sagittal planes and vice versa.
            cs.t = make_cva_block(m.params, str_cat("cross", i + 1, ".t"), c, cfg.tokens_sagittal(i),
                                  std::min(p_cfg, cfg.tokens_sagittal(i)), rng);
            cs.s = make_cva_block(m.params, str_cat("cross", i + 1, ".s"), c, cfg.tokens_transverse(i),
                                  std::min(p_cfg, cfg.tokens_transverse(i)), rng);
        }
    }

    if (cfg.use_hvaf) m.hvaf = make_hvaf_params(m.params, "hvaf", cfg.stage_channels[3], cfg.r, rng);

    const std::int64_t head_in = cfg.dual_view() ? 2 * cfg.stage_channels[3] : cfg.stage_channels[3];
    m.head_w = m.params.add("head.w",
                            random_normal<Real>({1, head_in}, rng, std::sqrt(Real(1) / Real(head_in))));
    m.head_b = m.params.add("head.b", Tensor<Real>::zeros({1}));
    return m;
}

template <typename Real>
struct ForwardTrace {
    Var<Real> logit;                       // (B, 1)
    std::array<Var<Real>, 4> stage_t{};    // per-stage stream features (null when the view is disabled)
    std::array<Var<Real>, 4> stage_s{};
};

namespace detail {

template <typename Real>
void check_volume(const Var<Real>& v, const ModelConfig& cfg, const char* which) {
    if (!v) throw data_error(str_cat("forward: missing ", which, " input for an enabled view"));
    const auto& s = v->value.shape();
    if (s.size() != 5 || s[1] != 1 || s[2] != cfg.input_size[0] || s[3] != cfg.input_size[1] ||
        s[4] != cfg.input_size[2])
        fail_shape("forward: ", which, " input ", shape_str(s), " does not match configured size (B,1,",
                   cfg.input_size[0], ",", cfg.input_size[1], ",", cfg.input_size[2], ")");
}

}  // namespace detail

template <typename Real>
ForwardTrace<Real> forward_trace(const Model<Real>& m, const Var<Real>& v_t, const Var<Real>& v_s) {
    const auto& cfg = m.config;
    if (m.t) detail::check_volume(v_t, cfg, "transverse");
    if (m.s) detail::check_volume(v_s, cfg, "sagittal");
    if (m.t && m.s && v_t->value.dim(0) != v_s->value.dim(0))
        fail_shape("forward: batch sizes differ, ", v_t->value.dim(0), " vs ", v_s->value.dim(0));

    ForwardTrace<Real> trace;
    Var<Real> xt, xs;
    if (m.t) xt = downsample(v_t, m.t->stem);
    if (m.s) xs = downsample(v_s, m.s->stem);

    for (std::size_t i = 0; i < 4; ++i) {
        if (m.t) {
            const auto& st = m.t->stages[i];
            xt = res_block3d(res_block3d(downsample(xt, st.down), st.block1), st.block2);
        }
        if (m.s) {
            const auto& st = m.s->stages[i];
            xs = res_block3d(res_block3d(downsample(xs, st.down), st.block1), st.block2);
        }
        const bool iva = cfg.use_iva;
        const bool cva = cfg.use_cva && m.t && m.s;
        if (iva && cva) {
            auto pair = hva_stage(xt, xs, *m.t->stages[i].iva, *m.s->stages[i].iva, *m.cross[i].t,
                                  *m.cross[i].s);
            xt = pair.t;
            xs = pair.s;
        } else {
            if (iva && m.t) xt = iva_forward(xt, View::transverse, *m.t->stages[i].iva);
            if (iva && m.s) xs = iva_forward(xs, View::sagittal, *m.s->stages[i].iva);
            if (cva) {
                auto snap_t = xt, snap_s = xs;
                xt = cva_refine_transverse(snap_t, snap_s, *m.cross[i].t);
                xs = cva_refine_sagittal(snap_t, snap_s, *m.cross[i].s);
            }
        }
        trace.stage_t[i] = xt;
        trace.stage_s[i] = xs;
    }

    Var<Real> fused;
    if (m.t && m.s)
        fused = m.hvaf ? hvaf_forward(xt, xs, *m.hvaf) : concat_channels(xt, xs);
    else
        fused = m.t ? xt : xs;
    trace.logit = linear(global_avg_pool(fused), m.head_w, m.head_b);
    if (!trace.logit->value.all_finite()) throw numeric_error("forward: non-finite logit");
    return trace;
}

template <typename Real>
Var<Real> forward(const Model<Real>& m, const Var<Real>& v_t, const Var<Real>& v_s) {
    return forward_trace(m, v_t, v_s).logit;
}

template <typename Real>
Var<Real> forward(const Model<Real>& m, const Tensor<Real>& v_t, const Tensor<Real>& v_s) {
    Var<Real> t = v_t.numel() > 0 ? make_constant(v_t) : Var<Real>{};
    Var<Real> s = v_s.numel() > 0 ? make_constant(v_s) : Var<Real>{};
    return forward(m, t, s);
}

// Per-case probabilities, shape (B,).
template <typename Real>
Tensor<Real> predict_proba(const Model<Real>& m, const Tensor<Real>& v_t, const Tensor<Real>& v_s) {
    auto logit = forward(m, v_t, v_s);
    const std::int64_t b = logit->value.dim(0);
    Tensor<Real> probs({b});
    for (std::int64_t i = 0; i < b; ++i) {
        const Real z = logit->value[i];
        probs[i] = z >= 0 ? Real(1) / (Real(1) + std::exp(-z)) : std::exp(z) / (Real(1) + std::exp(z));
    }
    return probs;
}

}  // namespace hva
