// Value and finite-difference checks for the tape primitives everything else
// is composed from.

#include <catch2/catch_amalgamated.hpp>

#include "hva/ops_basic.hpp"
#include "hva/ops_conv.hpp"
#include "hva/ops_norm.hpp"
#include "hva/ops_pool.hpp"
#include "support/gradcheck.hpp"

using namespace hva;
using testsupport::finite_diff_check;

namespace {

Var<double> leaf(Shape shape, Rng& rng, double scale = 1.0) {
    return make_var(random_normal<double>(std::move(shape), rng, scale), true);
}

}  // namespace

TEST_CASE("softmax rows are stochastic and match direct evaluation") {
    Rng rng(7);
    auto x = leaf({3, 5}, rng);
    auto y = softmax_lastdim(x);
    for (std::int64_t r = 0; r < 3; ++r) {
        double sum = 0;
        for (std::int64_t c = 0; c < 5; ++c) sum += y->value[r * 5 + c];
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
    // against exp/sum computed directly
    for (std::int64_t r = 0; r < 3; ++r) {
        double denom = 0;
        for (std::int64_t c = 0; c < 5; ++c) denom += std::exp(x->value[r * 5 + c]);
        for (std::int64_t c = 0; c < 5; ++c)
            REQUIRE(y->value[r * 5 + c] == Catch::Approx(std::exp(x->value[r * 5 + c]) / denom).epsilon(1e-10));
    }
}

TEST_CASE("elementwise and reduction primitives pass finite differences") {
    Rng rng(11);
    auto x = leaf({2, 3, 4}, rng);
    auto y = leaf({2, 3, 4}, rng);

    auto report = finite_diff_check(
        [&] {
            auto a = mul(sigmoid(x), add(y, relu(x)));
            auto b = affine(log_op(clamp(sigmoid(a), 1e-6, 1.0 - 1e-6)), -0.5, 0.25);
            return mean_all(mul(b, b));
        },
        {{"x", x}, {"y", y}}, 10);
    CAPTURE(report.worst_leaf);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax, pow and transpose pass finite differences") {
    Rng rng(13);
    auto x = leaf({4, 6}, rng);
    auto report = finite_diff_check(
        [&] {
            auto sm = softmax_lastdim(transpose_last2(x));
            auto p = pow_const(affine(sm, 0.9, 0.05), 2.5);
            return mean_all(p);
        },
        {{"x", x}}, 12);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("linear matches a per-token loop and passes finite differences") {
    Rng rng(17);
    auto x = leaf({2, 5, 3}, rng);
    auto w = leaf({4, 3}, rng);
    auto b = leaf({4}, rng);
    auto out = linear(x, w, b);
    REQUIRE(out->value.shape() == Shape{2, 5, 4});
    for (std::int64_t bi = 0; bi < 2; ++bi)
        for (std::int64_t t = 0; t < 5; ++t)
            for (std::int64_t o = 0; o < 4; ++o) {
                double acc = b->value[o];
                for (std::int64_t i = 0; i < 3; ++i)
                    acc += x->value[(bi * 5 + t) * 3 + i] * w->value[o * 3 + i];
                REQUIRE(out->value[(bi * 5 + t) * 4 + o] == Catch::Approx(acc).margin(1e-12));
            }

    auto report = finite_diff_check([&] { return mean_all(mul(linear(x, w, b), linear(x, w, b))); },
                                    {{"x", x}, {"w", w}, {"b", b}}, 8);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("bmm and project_tokens pass finite differences") {
    Rng rng(19);
    auto a = leaf({3, 4, 2}, rng);
    auto b = leaf({3, 2, 5}, rng);
    auto e = leaf({2, 4}, rng);
    auto report = finite_diff_check(
        [&] {
            auto prod = bmm(a, b);                       // (3,4,5)
            auto proj = project_tokens(prod, e);         // (3,2,5)
            return mean_all(mul(proj, proj));
        },
        {{"a", a}, {"b", b}, {"e", e}}, 8);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("div_by_scalar differentiates through the temperature") {
    Rng rng(23);
    auto x = leaf({2, 6}, rng);
    auto g = make_var(Tensor<double>::scalar(1.7), true);
    auto report = finite_diff_check([&] { return mean_all(mul(softmax_lastdim(div_by_scalar(x, g)), x)); },
                                    {{"x", x}, {"gamma", g}}, 8);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("norm layers pass finite differences") {
    Rng rng(29);
    auto x = leaf({2, 6, 3, 2}, rng);
    auto gamma = make_var(Tensor<double>::full({6}, 1.0), true);
    auto beta = make_var(Tensor<double>::zeros({6}), true);

    SECTION("group norm") {
        auto report = finite_diff_check(
            [&] {
                auto y = group_norm(x, gamma, beta, 3);
                return mean_all(mul(y, sigmoid(y)));
            },
            {{"x", x}, {"gamma", gamma}, {"beta", beta}}, 8);
        REQUIRE(report.max_rel_err < 1e-6);
    }

    SECTION("token-wise layer norm") {
        auto tokens = leaf({2, 5, 6}, rng);
        auto report = finite_diff_check(
            [&] {
                auto y = layer_norm_lastdim(tokens, gamma, beta);
                return mean_all(mul(y, sigmoid(y)));
            },
            {{"tokens", tokens}, {"gamma", gamma}, {"beta", beta}}, 8);
        REQUIRE(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("conv3d matches a sliding-window loop") {
    Rng rng(31);
    auto x = leaf({2, 3, 4, 5, 4}, rng);
    auto w = leaf({2, 3, 3, 3, 3}, rng);
    auto b = leaf({2}, rng);

    for (const std::int64_t stride : {std::int64_t(1), std::int64_t(2)}) {
        auto out = conv3d(x, w, b, stride, 1);
        const auto& so = out->value.shape();
        for (std::int64_t bi = 0; bi < so[0]; ++bi)
            for (std::int64_t co = 0; co < so[1]; ++co)
                for (std::int64_t oh = 0; oh < so[2]; ++oh)
                    for (std::int64_t ow = 0; ow < so[3]; ++ow)
                        for (std::int64_t od = 0; od < so[4]; ++od) {
                            double acc = b->value[co];
                            for (std::int64_t ci = 0; ci < 3; ++ci)
                                for (std::int64_t kh = 0; kh < 3; ++kh)
                                    for (std::int64_t kw = 0; kw < 3; ++kw)
                                        for (std::int64_t kd = 0; kd < 3; ++kd) {
                                            const std::int64_t ih = oh * stride - 1 + kh;
                                            const std::int64_t iw = ow * stride - 1 + kw;
                                            const std::int64_t id = od * stride - 1 + kd;
                                            if (ih < 0 || ih >= 4 || iw < 0 || iw >= 5 || id < 0 || id >= 4) continue;
                                            acc += x->value[x->value.offset5(bi, ci, ih, iw, id)] *
                                                   w->value[w->value.offset5(co, ci, kh, kw, kd)];
                                        }
                            REQUIRE(out->value[out->value.offset5(bi, co, oh, ow, od)] ==
                                    Catch::Approx(acc).margin(1e-10));
                        }
    }
}

TEST_CASE("conv3d and conv2d pass finite differences") {
    Rng rng(37);
    SECTION("conv3d stride 2") {
        auto x = leaf({1, 2, 4, 4, 4}, rng);
        auto w = leaf({3, 2, 3, 3, 3}, rng, 0.5);
        auto b = leaf({3}, rng, 0.1);
        auto report = finite_diff_check(
            [&] {
                auto y = conv3d(x, w, b, 2, 1);
                return mean_all(mul(y, sigmoid(y)));
            },
            {{"x", x}, {"w", w}, {"b", b}}, 8);
        REQUIRE(report.max_rel_err < 1e-6);
    }
    SECTION("conv2d stride 1") {
        auto x = leaf({2, 2, 5, 4}, rng);
        auto w = leaf({2, 2, 3, 3}, rng, 0.5);
        auto b = leaf({2}, rng, 0.1);
        auto report = finite_diff_check(
            [&] {
                auto y = conv2d(x, w, b, 1, 1);
                return mean_all(mul(y, sigmoid(y)));
            },
            {{"x", x}, {"w", w}, {"b", b}}, 8);
        REQUIRE(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("pool, concat, slice and gate ops pass finite differences") {
    Rng rng(41);
    auto f = leaf({2, 4, 3, 3, 2}, rng);
    auto g5 = leaf({2, 4, 3, 3, 2}, rng);

    auto report = finite_diff_check(
        [&] {
            auto cat = concat_channels(f, g5);                     // (2,8,...)
            auto front = slice_channels(cat, 0, 4);
            auto gate_c = sigmoid(global_avg_pool(cat));           // (2,8)
            auto gated = mul_channel_gate(cat, gate_c);
            auto sg = sigmoid(add(channel_avg_pool(front), channel_max_pool(front)));
            auto gated2 = mul_spatial_gate(slice_channels(gated, 2, 6), sg);
            auto mx = global_max_pool(gated2);
            return mean_all(mul(mx, mx));
        },
        {{"f", f}, {"g5", g5}}, 10);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("planes/token views round-trip and differentiate") {
    Rng rng(43);
    auto p = leaf({3, 4, 2, 3}, rng);
    auto t = planes_to_tokens(p);
    REQUIRE(t->value.shape() == Shape{3, 6, 4});
    // token n = a1*A2 + a2 carries channel column c
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t a1 = 0; a1 < 2; ++a1)
                for (std::int64_t a2 = 0; a2 < 3; ++a2)
                    REQUIRE(t->value[t->value.offset3(b, a1 * 3 + a2, c)] ==
                            p->value[p->value.offset4(b, c, a1, a2)]);
    auto back = tokens_to_planes(t, 2, 3);
    REQUIRE(max_abs_diff(back->value, p->value) == 0.0);

    auto report = finite_diff_check(
        [&] {
            auto tok = planes_to_tokens(p);
            auto y = tokens_to_planes(softmax_lastdim(tok), 2, 3);
            return mean_all(mul(y, y));
        },
        {{"p", p}}, 8);
    REQUIRE(report.max_rel_err < 1e-6);
}
