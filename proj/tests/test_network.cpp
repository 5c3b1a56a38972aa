// Model assembly and the end-to-end forward pass: parameter topology per
// config, deterministic builds, batch independence, probability output,
// input validation, gradient coverage, and checkpoint round-trips.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "hva/checkpoint.hpp"
#include "hva/network.hpp"

using namespace hva;

namespace {

// Small enough to forward quickly; stage-4 channels stay wide enough that
// group norm never sees a single element once the volume is down to 1x1x1.
ModelConfig tiny_config() {
    ModelConfig c;
    c.input_size = {32, 32, 32};
    c.stage_channels = {4, 4, 8, 12};
    c.p_per_stage = {4, 4, 4, 4};
    c.r = 2;
    c.seed = 3;
    return c;
}

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("the default config assembles the expected topology") {
    const ModelConfig cfg;
    REQUIRE(cfg.stage_dims(0) == std::array<std::int64_t, 3>{32, 32, 32});
    REQUIRE(cfg.stage_dims(3) == std::array<std::int64_t, 3>{4, 4, 4});
    REQUIRE(cfg.tokens_transverse(0) == 1024);
    REQUIRE(cfg.tokens_sagittal(3) == 16);

    auto m = build<float>(cfg);
    REQUIRE(m.head_w->value.shape() == Shape{1, 512});
    REQUIRE(m.head_b->value.shape() == Shape{1});
    REQUIRE(m.params.has("t.stem.conv.w"));
    REQUIRE(m.params.has("s.stage4.iva.epa.q.w"));
    REQUIRE(m.params.has("hvaf.mlp1.w"));
    REQUIRE(m.params.at("t.stage1.iva.epa.e_k")->value.shape() == Shape{64, 1024});
    // p_per_stage is clamped to the stage's token count.
    REQUIRE(m.params.at("cross4.t.epa.e_k")->value.shape() == Shape{16, 16});
    REQUIRE(m.params.at("hvaf.mlp1.w")->value.shape() == Shape{32, 512});
}

TEST_CASE("single-view configs drop the other stream, cross blocks and fusion") {
    ModelConfig cfg = tiny_config();
    cfg.use_sagittal = false;
    cfg.use_cva = false;
    cfg.use_hvaf = false;
    auto m = build<float>(cfg);
    REQUIRE(m.head_w->value.shape() == Shape{1, 12});
    REQUIRE(m.t.has_value());
    REQUIRE_FALSE(m.s.has_value());
    REQUIRE_FALSE(m.hvaf.has_value());
    for (const auto& [name, var] : m.params.items()) {
        REQUIRE(name.rfind("s.", 0) != 0);
        REQUIRE(name.rfind("cross", 0) != 0);
        REQUIRE(name.rfind("hvaf", 0) != 0);
    }
}

TEST_CASE("builds with the same config and seed are identical") {
    auto a = build<float>(tiny_config());
    auto b = build<float>(tiny_config());
    const auto ia = a.params.items(), ib = b.params.items();
    REQUIRE(ia.size() == ib.size());
    for (std::size_t i = 0; i < ia.size(); ++i) {
        REQUIRE(ia[i].first == ib[i].first);
        REQUIRE(ia[i].second->value.shape() == ib[i].second->value.shape());
        REQUIRE(max_abs_diff(ia[i].second->value, ib[i].second->value) == 0.0f);
    }
}

TEST_CASE("forward maps a batch to one logit per case, independently per case") {
    auto m = build<float>(tiny_config());
    Rng rng(9);
    auto v_t = random_normal<float>({2, 1, 32, 32, 32}, rng);
    auto v_s = random_normal<float>({2, 1, 32, 32, 32}, rng);
    auto logit = forward(m, v_t, v_s);
    REQUIRE(logit->value.shape() == Shape{2, 1});

    // Each case's logit must be what the single-case forward produces, up to
    // GEMM reassociation, which depends on the row count.
    const std::int64_t vox = 32 * 32 * 32;
    for (std::int64_t i = 0; i < 2; ++i) {
        Tensor<float> one_t({1, 1, 32, 32, 32}), one_s({1, 1, 32, 32, 32});
        std::copy_n(v_t.data() + i * vox, vox, one_t.data());
        std::copy_n(v_s.data() + i * vox, vox, one_s.data());
        auto single = forward(m, one_t, one_s);
        REQUIRE(single->value[0] == Catch::Approx(logit->value[i]).margin(1e-5));
    }
}

TEST_CASE("predict_proba is the logistic of the logit") {
    auto m = build<float>(tiny_config());
    Rng rng(13);
    auto v_t = random_normal<float>({3, 1, 32, 32, 32}, rng);
    auto v_s = random_normal<float>({3, 1, 32, 32, 32}, rng);
    auto logit = forward(m, v_t, v_s);
    auto probs = predict_proba(m, v_t, v_s);
    REQUIRE(probs.shape() == Shape{3});
    for (std::int64_t i = 0; i < 3; ++i) {
        const double want = 1.0 / (1.0 + std::exp(-double(logit->value[i])));
        REQUIRE(double(probs[i]) == Catch::Approx(want).margin(1e-7));
        REQUIRE(probs[i] > 0.0f);
        REQUIRE(probs[i] < 1.0f);
    }
}

TEST_CASE("forward validates presence, extent and batch agreement of inputs") {
    auto m = build<float>(tiny_config());
    Rng rng(17);
    auto good = random_normal<float>({1, 1, 32, 32, 32}, rng);
    REQUIRE_THROWS_AS(forward(m, good, Tensor<float>{}), data_error);
    auto short_d = random_normal<float>({1, 1, 32, 32, 16}, rng);
    REQUIRE_THROWS_AS(forward(m, good, short_d), std::invalid_argument);
    auto two = random_normal<float>({2, 1, 32, 32, 32}, rng);
    REQUIRE_THROWS_AS(forward(m, good, two), std::invalid_argument);
}

TEST_CASE("config validation rejects inconsistent settings") {
    auto expect_bad = [](auto mutate) {
        ModelConfig c = tiny_config();
        mutate(c);
        REQUIRE_THROWS_AS(c.validate(), data_error);
    };
    expect_bad([](ModelConfig& c) { c.use_transverse = c.use_sagittal = false; });
    expect_bad([](ModelConfig& c) { c.use_sagittal = false; });  // cva needs both views
    expect_bad([](ModelConfig& c) { c.input_size = {48, 32, 32}; });
    expect_bad([](ModelConfig& c) { c.stage_channels = {4, 4, 4}; });
    expect_bad([](ModelConfig& c) { c.stage_channels = {3, 4, 8, 12}; });
    expect_bad([](ModelConfig& c) { c.p_per_stage = {0, 4, 4, 4}; });
    expect_bad([](ModelConfig& c) { c.r = 5; });
    expect_bad([](ModelConfig& c) { c.head = "mlp"; });
    REQUIRE_NOTHROW(tiny_config().validate());
}

TEST_CASE("every parameter collects gradient over a few random batches") {
    // Stage 4 needs at least two tokens per plane, otherwise its spatial
    // softmax is constant and e_k / gamma_s cannot receive gradient.
    ModelConfig cfg = tiny_config();
    cfg.input_size = {32, 64, 64};
    auto m = build<float>(cfg);
    std::set<std::string> pending;
    for (const auto& [name, var] : m.params.items()) pending.insert(name);

    Rng rng(21);
    for (int round = 0; round < 4 && !pending.empty(); ++round) {
        m.params.zero_grads();
        auto v_t = make_constant(random_normal<float>({2, 1, 32, 64, 64}, rng));
        auto v_s = make_constant(random_normal<float>({2, 1, 32, 64, 64}, rng));
        auto logit = forward(m, v_t, v_s);
        backward(mean_all(mul(logit, logit)));
        for (auto it = pending.begin(); it != pending.end();) {
            const auto& g = m.params.at(*it)->grad;
            bool nonzero = false;
            for (std::int64_t i = 0; i < g.numel() && !nonzero; ++i) nonzero = g[i] != 0.0f;
            it = nonzero ? pending.erase(it) : ++it;
        }
    }
    INFO("parameters without gradient: " << (pending.empty() ? "none" : *pending.begin()));
    REQUIRE(pending.empty());
}

TEST_CASE("checkpoints restore the exact model") {
    auto m = build<float>(tiny_config());
    Rng rng(25);
    auto v_t = random_normal<float>({2, 1, 32, 32, 32}, rng);
    auto v_s = random_normal<float>({2, 1, 32, 32, 32}, rng);
    auto before = forward(m, v_t, v_s);

    const auto path = tmp_path("hva_test_network.ckpt");
    save_checkpoint(path.string(), checkpoint_from_model(m, 7));
    auto ck = load_checkpoint<float>(path.string());
    REQUIRE(ck.epoch == 7);
    REQUIRE(ck.config.stage_channels == tiny_config().stage_channels);
    REQUIRE(ck.adam_m.empty());

    auto restored = model_from_checkpoint(ck);
    auto after = forward(restored, v_t, v_s);
    REQUIRE(max_abs_diff(before->value, after->value) == 0.0f);
    std::filesystem::remove(path);
}

TEST_CASE("a second save of the same checkpoint is byte-identical") {
    auto m = build<float>(tiny_config());
    const auto p1 = tmp_path("hva_test_network_a.ckpt");
    const auto p2 = tmp_path("hva_test_network_b.ckpt");
    save_checkpoint(p1.string(), checkpoint_from_model(m));
    save_checkpoint(p2.string(), checkpoint_from_model(m));
    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    REQUIRE(sa == sb);
    REQUIRE_FALSE(sa.empty());
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("corrupt checkpoint files are rejected") {
    const auto bad = tmp_path("hva_test_network_bad.ckpt");
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOTACKPT\n"
           << std::string(64, 'x');
    }
    REQUIRE_THROWS_AS(load_checkpoint<float>(bad.string()), data_error);

    auto m = build<float>(tiny_config());
    const auto good = tmp_path("hva_test_network_trunc.ckpt");
    save_checkpoint(good.string(), checkpoint_from_model(m));
    const auto full = std::filesystem::file_size(good);
    std::filesystem::resize_file(good, full / 2);
    REQUIRE_THROWS_AS(load_checkpoint<float>(good.string()), data_error);
    std::filesystem::remove(bad);
    std::filesystem::remove(good);
}
