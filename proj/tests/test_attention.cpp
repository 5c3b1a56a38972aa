// Intra-view attention: shared-QK projections, the spatial and channel
// branches against dense oracles and hand values, and the IVA block's
// structural properties.

#include <catch2/catch_amalgamated.hpp>

#include "hva/attention.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace hva;
using testsupport::finite_diff_check;

namespace {

template <typename Real>
Tensor<Real> identity_matrix(std::int64_t n) {
    Tensor<Real> m({n, n});
    for (std::int64_t i = 0; i < n; ++i) m.data()[m.offset2(i, i)] = Real(1);
    return m;
}

// EPAParams carrying only what spatial/channel attention read directly.
template <typename Real>
EPAParams<Real> bare_epa(Tensor<Real> e_k, Tensor<Real> e_v, Real gamma_s, Real gamma_c) {
    EPAParams<Real> p;
    p.e_k = make_var(std::move(e_k), false);
    p.e_v = make_var(std::move(e_v), false);
    p.gamma_s = make_var(Tensor<Real>::scalar(gamma_s), false);
    p.gamma_c = make_var(Tensor<Real>::scalar(gamma_c), false);
    return p;
}

}  // namespace

TEST_CASE("epa_project with identity weights returns the normalized tokens") {
    Rng rng(3);
    ParamStore<double> store;
    auto p = make_epa_params(store, "epa", 4, 9, 4, rng);
    p.w_q->value = identity_matrix<double>(4);
    p.w_k->value = identity_matrix<double>(4);
    p.w_vs->value = identity_matrix<double>(4);
    p.w_vc->value = identity_matrix<double>(4);

    auto planes = make_var(random_normal<double>({2, 4, 3, 3}, rng), false);
    auto proj = epa_project(planes, p);
    REQUIRE(proj.q->value.shape() == Shape{2, 9, 4});
    REQUIRE(proj.k->value.shape() == Shape{2, 9, 4});
    REQUIRE(proj.vs->value.shape() == Shape{2, 9, 4});
    REQUIRE(proj.vc->value.shape() == Shape{2, 9, 4});

    const auto& x = planes->value;
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t a1 = 0; a1 < 3; ++a1)
            for (std::int64_t a2 = 0; a2 < 3; ++a2) {
                double mu = 0, var = 0;
                for (std::int64_t c = 0; c < 4; ++c) mu += x.data()[x.offset4(b, c, a1, a2)];
                mu /= 4.0;
                for (std::int64_t c = 0; c < 4; ++c) {
                    const double d = x.data()[x.offset4(b, c, a1, a2)] - mu;
                    var += d * d;
                }
                var /= 4.0;
                const std::int64_t n = a1 * 3 + a2;
                for (std::int64_t c = 0; c < 4; ++c) {
                    const double want = (x.data()[x.offset4(b, c, a1, a2)] - mu) / std::sqrt(var + 1e-5);
                    REQUIRE(proj.q->value.data()[proj.q->value.offset3(b, n, c)] ==
                            Catch::Approx(want).margin(1e-12));
                    REQUIRE(proj.vc->value.data()[proj.vc->value.offset3(b, n, c)] ==
                            Catch::Approx(want).margin(1e-12));
                }
            }
}

TEST_CASE("epa_project matches a per-token matrix-multiply loop") {
    Rng rng(17);
    ParamStore<double> store;
    auto p = make_epa_params(store, "epa", 5, 12, 6, rng);
    auto planes = make_var(random_normal<double>({3, 5, 3, 4}, rng), false);
    auto proj = epa_project(planes, p);

    const auto& x = planes->value;
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t n = 0; n < 12; ++n) {
            const std::int64_t a1 = n / 4, a2 = n % 4;
            double tok[5], mu = 0, var = 0;
            for (std::int64_t c = 0; c < 5; ++c) {
                tok[c] = x.data()[x.offset4(b, c, a1, a2)];
                mu += tok[c];
            }
            mu /= 5.0;
            for (std::int64_t c = 0; c < 5; ++c) var += (tok[c] - mu) * (tok[c] - mu);
            var /= 5.0;
            double norm[5];
            for (std::int64_t c = 0; c < 5; ++c) norm[c] = (tok[c] - mu) / std::sqrt(var + 1e-5);
            for (std::int64_t co = 0; co < 5; ++co) {
                double want = p.b_q->value.data()[co];
                for (std::int64_t ci = 0; ci < 5; ++ci)
                    want += norm[ci] * p.w_q->value.data()[p.w_q->value.offset2(co, ci)];
                REQUIRE(proj.q->value.data()[proj.q->value.offset3(b, n, co)] ==
                        Catch::Approx(want).margin(1e-6));
            }
        }
}

TEST_CASE("epa_project rejects mismatched channels or token count") {
    Rng rng(9);
    ParamStore<double> store;
    auto p = make_epa_params(store, "epa", 4, 9, 4, rng);
    auto wrong_c = make_var(random_normal<double>({2, 3, 3, 3}, rng), false);
    REQUIRE_THROWS_AS(epa_project(wrong_c, p), std::invalid_argument);
    auto wrong_n = make_var(random_normal<double>({2, 4, 2, 3}, rng), false);
    REQUIRE_THROWS_AS(epa_project(wrong_n, p), std::invalid_argument);
}

TEST_CASE("spatial attention reproduces the two-token hand example") {
    auto p = bare_epa<double>(identity_matrix<double>(2), identity_matrix<double>(2), 1.0, 1.0);
    auto q = make_var(Tensor<double>({1, 1, 2}, {1, 0}), false);
    auto k = make_var(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}), false);
    auto v = make_var(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}), false);
    auto out = spatial_attention(q, k, v, p);
    REQUIRE(out->value.shape() == Shape{1, 1, 2});
    const double sig = std::exp(1.0) / (std::exp(1.0) + 1.0);
    REQUIRE(out->value.data()[0] == Catch::Approx(0.7311).margin(5e-5));
    REQUIRE(out->value.data()[1] == Catch::Approx(0.2689).margin(5e-5));
    REQUIRE(out->value.data()[0] == Catch::Approx(sig).margin(1e-12));
}

TEST_CASE("spatial attention with identity projections equals dense attention") {
    Rng rng(29);
    const std::int64_t b = 2, n = 6, c = 3;
    auto q = make_var(random_normal<double>({b, n, c}, rng), false);
    auto k = make_var(random_normal<double>({b, n, c}, rng), false);
    auto v = make_var(random_normal<double>({b, n, c}, rng), false);
    auto p = bare_epa<double>(identity_matrix<double>(n), identity_matrix<double>(n), 1.7, 1.0);
    auto out = spatial_attention(q, k, v, p);

    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ni = 0; ni < n; ++ni) {
            std::vector<double> logits(n);
            for (std::int64_t nj = 0; nj < n; ++nj) {
                double acc = 0;
                for (std::int64_t ci = 0; ci < c; ++ci)
                    acc += q->value.data()[q->value.offset3(bi, ni, ci)] *
                           k->value.data()[k->value.offset3(bi, nj, ci)];
                logits[static_cast<std::size_t>(nj)] = acc / 1.7;
            }
            auto att = testsupport::row_softmax(logits);
            for (std::int64_t ci = 0; ci < c; ++ci) {
                double want = 0;
                for (std::int64_t nj = 0; nj < n; ++nj)
                    want += att[static_cast<std::size_t>(nj)] *
                            v->value.data()[v->value.offset3(bi, nj, ci)];
                REQUIRE(out->value.data()[out->value.offset3(bi, ni, ci)] ==
                        Catch::Approx(want).margin(1e-10));
            }
        }
}

TEST_CASE("spatial and channel attention match dense oracles on random instances") {
    Rng rng(41);
    for (int it = 0; it < 30; ++it) {
        const std::int64_t b = 1 + std::int64_t(rng.below(3));
        const std::int64_t n = 2 + std::int64_t(rng.below(15));
        const std::int64_t c = 1 + std::int64_t(rng.below(8));
        const std::int64_t pr = 1 + std::int64_t(rng.below(std::uint64_t(n)));
        auto q_t = random_normal<float>({b, n, c}, rng);
        auto k_t = random_normal<float>({b, n, c}, rng);
        auto vs_t = random_normal<float>({b, n, c}, rng);
        auto vc_t = random_normal<float>({b, n, c}, rng);
        auto e_k = random_normal<float>({pr, n}, rng, 1.0f / float(std::sqrt(double(n))));
        auto e_v = random_normal<float>({pr, n}, rng, 1.0f / float(std::sqrt(double(n))));
        const float gs = 0.5f + float(rng.uniform());
        const float gc = 0.5f + float(rng.uniform());

        auto p = bare_epa<float>(e_k, e_v, gs, gc);
        auto s_lib = spatial_attention(make_var(q_t, false), make_var(k_t, false), make_var(vs_t, false), p);
        auto c_lib = channel_attention(make_var(q_t, false), make_var(k_t, false), make_var(vc_t, false), p);
        auto s_ref = testsupport::dense_spatial_attention(q_t, k_t, vs_t, e_k, e_v, double(gs));
        auto c_ref = testsupport::dense_channel_attention(q_t, k_t, vc_t, double(gc));

        REQUIRE(max_abs_diff(s_lib->value.template cast<double>(), s_ref) <= 1e-5);
        REQUIRE(max_abs_diff(c_lib->value.template cast<double>(), c_ref) <= 1e-5);
    }
}

TEST_CASE("attention rows are stochastic") {
    Rng rng(53);
    const std::int64_t b = 2, n = 7, c = 4, pr = 3;
    auto q = make_var(random_normal<double>({b, n, c}, rng), false);
    auto k = make_var(random_normal<double>({b, n, c}, rng), false);
    auto e_k = make_var(random_normal<double>({pr, n}, rng), false);
    auto gamma = make_var(Tensor<double>::scalar(2.0), false);
    auto att = softmax_lastdim(div_by_scalar(bmm(q, transpose_last2(project_tokens(k, e_k))), gamma));
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ni = 0; ni < n; ++ni) {
            double sum = 0;
            for (std::int64_t pi = 0; pi < pr; ++pi)
                sum += att->value.data()[att->value.offset3(bi, ni, pi)];
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
        }
}

TEST_CASE("channel attention: single channel passes V through, orthogonal case hits the hand value") {
    auto p1 = bare_epa<double>(identity_matrix<double>(1), identity_matrix<double>(1), 1.0, 3.0);
    Rng rng(61);
    auto q1 = make_var(random_normal<double>({2, 5, 1}, rng), false);
    auto k1 = make_var(random_normal<double>({2, 5, 1}, rng), false);
    auto v1 = make_var(random_normal<double>({2, 5, 1}, rng), false);
    auto out1 = channel_attention(q1, k1, v1, p1);
    REQUIRE(max_abs_diff(out1->value, v1->value) <= 1e-12);

    // Q^T K = I with gamma_c = 1: map rows are [sig', 1 - sig'].
    auto p2 = bare_epa<double>(identity_matrix<double>(2), identity_matrix<double>(2), 1.0, 1.0);
    auto q2 = make_var(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}), false);
    auto k2 = make_var(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}), false);
    auto v2 = make_var(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}), false);
    auto out2 = channel_attention(q2, k2, v2, p2);
    const double sig = std::exp(1.0) / (std::exp(1.0) + 1.0);
    REQUIRE(out2->value.data()[out2->value.offset3(0, 0, 0)] == Catch::Approx(sig).margin(1e-12));
    REQUIRE(out2->value.data()[out2->value.offset3(0, 0, 1)] == Catch::Approx(1.0 - sig).margin(1e-12));
    REQUIRE(out2->value.data()[out2->value.offset3(0, 0, 0)] == Catch::Approx(0.7311).margin(5e-5));
}

TEST_CASE("iva_forward preserves shape and is zero on zero input with default biases") {
    Rng rng(71);
    ParamStore<double> store;
    auto p = make_iva_block(store, "iva", 8, 16, 8, rng);
    auto f = make_var(random_normal<double>({2, 8, 4, 4, 4}, rng), false);
    auto out = iva_forward(f, View::transverse, p);
    REQUIRE(out->value.shape() == Shape{2, 8, 4, 4, 4});

    auto z = make_var(Tensor<double>({2, 8, 4, 4, 4}), false);
    auto zout = iva_forward(z, View::transverse, p);
    for (std::int64_t i = 0; i < zout->value.numel(); ++i) REQUIRE(zout->value.data()[i] == 0.0);
}

TEST_CASE("IVA commutes with permutations along its imaging axis") {
    Rng rng(83);
    ParamStore<float> store;
    auto p = make_iva_block(store, "iva", 4, 9, 5, rng);
    auto x = random_normal<float>({2, 4, 3, 3, 5}, rng);

    std::vector<std::int64_t> perm_d = {4, 2, 0, 1, 3};
    auto lhs = iva_forward(make_var(testsupport::permute_axis(x, 4, perm_d), false), View::transverse, p);
    auto rhs = iva_forward(make_var(x, false), View::transverse, p);
    REQUIRE(max_abs_diff(lhs->value, testsupport::permute_axis(rhs->value, 4, perm_d)) <= 1e-5);

    ParamStore<float> store_s;
    auto ps = make_iva_block(store_s, "iva", 4, 15, 5, rng);
    std::vector<std::int64_t> perm_h = {1, 2, 0};
    auto lhs_s = iva_forward(make_var(testsupport::permute_axis(x, 2, perm_h), false), View::sagittal, ps);
    auto rhs_s = iva_forward(make_var(x, false), View::sagittal, ps);
    REQUIRE(max_abs_diff(lhs_s->value, testsupport::permute_axis(rhs_s->value, 2, perm_h)) <= 1e-5);
}

TEST_CASE("gradients through both attention branches match finite differences") {
    Rng rng(97);
    ParamStore<double> store;
    auto p = make_epa_params(store, "epa", 3, 6, 4, rng);
    auto planes = make_var(random_normal<double>({2, 3, 2, 3}, rng), true);

    auto make_loss = [&]() {
        auto proj = epa_project(planes, p);
        auto s = spatial_attention(proj.q, proj.k, proj.vs, p);
        auto c = channel_attention(proj.q, proj.k, proj.vc, p);
        return mean_all(mul(add(s, c), add(s, c)));
    };
    std::vector<std::pair<std::string, Var<double>>> leaves = {{"planes", planes}};
    for (const auto& [name, var] : store.items()) leaves.emplace_back(name, var);
    auto report = finite_diff_check(make_loss, leaves, 4, 1e-5, 7);
    INFO(report.worst_leaf);
    REQUIRE(report.max_rel_err <= 1e-3);
}

TEST_CASE("gradients through iva_forward match finite differences") {
    Rng rng(101);
    ParamStore<double> store;
    auto p = make_iva_block(store, "iva", 3, 6, 3, rng);
    auto f = make_var(random_normal<double>({1, 3, 2, 3, 2}, rng), true);

    auto make_loss = [&]() {
        auto out = iva_forward(f, View::transverse, p);
        return mean_all(mul(out, out));
    };
    std::vector<std::pair<std::string, Var<double>>> leaves = {{"f", f}};
    for (const auto& [name, var] : store.items()) leaves.emplace_back(name, var);
    auto report = finite_diff_check(make_loss, leaves, 3, 1e-5, 11);
    INFO(report.worst_leaf);
    REQUIRE(report.max_rel_err <= 1e-3);
}
