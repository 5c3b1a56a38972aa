// Ablation grid structure, CAM export properties, and the CLI subcommands
// driven in-process end to end on a small synthetic dataset.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "hva/cam.hpp"
#include "hva/cli.hpp"
#include "hva/synth.hpp"
#include "hva/train.hpp"

using namespace hva;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.input_size = {32, 32, 32};
    c.stage_channels = {4, 4, 8, 12};
    c.p_per_stage = {4, 4, 4, 4};
    c.r = 2;
    c.seed = 3;
    return c;
}

fs::path fresh_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("hva_tooling_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"hva"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::vector<CasePair<float>> synth_cases(std::uint64_t seed, int n) {
    std::vector<CasePair<float>> out;
    for (int i = 0; i < n; ++i) {
        auto c = synth_case<float>(seed, i, SynthParams{});
        normalize_zscore(c.vol_t);
        normalize_zscore(c.vol_s);
        out.push_back({c.spec.id, c.vol_t, c.vol_s, c.spec.label});
    }
    return out;
}

}  // namespace

TEST_CASE("the ablation grid walks from single views to the full model") {
    const auto grid = ablation_grid();
    REQUIRE(grid.size() == 8);

    // Two single-view rows without attention, two with IVA, then the dual rows
    // adding IVA, CVA and HVAF one at a time.
    REQUIRE(grid[0].name == "TV");
    REQUIRE((grid[0].use_transverse && !grid[0].use_sagittal && !grid[0].use_iva));
    REQUIRE(grid[1].name == "SV");
    REQUIRE((!grid[1].use_transverse && grid[1].use_sagittal));
    REQUIRE((grid[2].use_transverse && grid[2].use_iva && !grid[2].use_cva));
    REQUIRE((grid[3].use_sagittal && grid[3].use_iva && !grid[3].use_cva));
    REQUIRE((grid[4].use_transverse && grid[4].use_sagittal && !grid[4].use_iva));
    REQUIRE((grid[5].use_iva && !grid[5].use_cva && !grid[5].use_hvaf));
    REQUIRE((grid[6].use_iva && grid[6].use_cva && !grid[6].use_hvaf));
    const auto& full = grid[7];
    REQUIRE((full.use_transverse && full.use_sagittal && full.use_iva && full.use_cva && full.use_hvaf));

    // CVA and HVAF only ever appear alongside both views, and every row is a
    // buildable configuration.
    for (const auto& row : grid) {
        if (row.use_cva || row.use_hvaf) REQUIRE((row.use_transverse && row.use_sagittal));
        REQUIRE_NOTHROW(apply_ablation(tiny_config(), row).validate());
    }
}

TEST_CASE("ablation csv lays out one row per configuration") {
    const auto dir = fresh_dir("csv");
    std::vector<AblationResult<float>> results;
    for (const auto& row : ablation_grid()) {
        AblationResult<float> r;
        r.row = row;
        r.metrics = metrics_from_counts(3, 1, 2, 1);
        r.metrics.auc = 0.75;
        results.push_back(r);
    }
    results[0].metrics = MetricsReport{};  // all-optional row stays writable

    const auto path = (dir / "ablation.csv").string();
    write_ablation_csv(path, results);
    std::ifstream is(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 9);
    REQUIRE(lines[0] == "name,use_transverse,use_sagittal,use_iva,use_cva,use_hvaf,auc,f1,accuracy,sensitivity,specificity");
    REQUIRE(lines[1].rfind("TV,1,0,0,0,0,,", 0) == 0);
    REQUIRE(lines[8].rfind("TV+SV+IVA+CVA+HVAF,1,1,1,1,1,0.75", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("cam maps cover the input grid with values in [0,1]") {
    auto model = build<float>(tiny_config());
    Rng rng(9);
    const auto vt = random_normal<float>({32, 32, 32}, rng);
    const auto vs = random_normal<float>({32, 32, 32}, rng);

    for (int stage = 1; stage <= 4; ++stage) {
        const auto maps = cam(model, vt, vs, stage);
        REQUIRE(maps.map_t.shape() == Shape{32, 32, 32});
        REQUIRE(maps.map_s.shape() == Shape{32, 32, 32});
        for (std::int64_t i = 0; i < maps.map_t.numel(); ++i) {
            REQUIRE(maps.map_t[i] >= 0.0f);
            REQUIRE(maps.map_t[i] <= 1.0f);
        }
    }
    REQUIRE_THROWS_AS(cam(model, vt, vs, 0), data_error);
    REQUIRE_THROWS_AS(cam(model, vt, vs, 5), data_error);

    Tensor<float> batch2({2, 1, 32, 32, 32});
    REQUIRE_THROWS_AS(cam(model, batch2, batch2, 4), std::invalid_argument);
}

TEST_CASE("single-view models produce a map only for their view") {
    ModelConfig cfg = tiny_config();
    cfg.use_sagittal = false;
    cfg.use_cva = false;
    cfg.use_hvaf = false;
    auto model = build<float>(cfg);
    Rng rng(10);
    const auto vt = random_normal<float>({32, 32, 32}, rng);
    const auto maps = cam(model, vt, Tensor<float>{}, 3);
    REQUIRE(maps.map_t.shape() == Shape{32, 32, 32});
    REQUIRE(maps.map_s.numel() == 0);
}

TEST_CASE("a constant volume yields an all-zero map") {
    auto model = build<float>(tiny_config());
    const auto flat = Tensor<float>::zeros({32, 32, 32});
    const auto maps = cam(model, flat, flat, 4);
    for (std::int64_t i = 0; i < maps.map_t.numel(); ++i) REQUIRE(maps.map_t[i] == 0.0f);
}

TEST_CASE("after training, heatmap mass concentrates in the lesion box") {
    // A crisp, high-contrast variant keeps the evidence compact enough to
    // localize; the default degradation smears it across half the volume.
    SynthParams sp;
    sp.contrast = {0.9, 1.1};
    sp.blur_sigma = 1.0;
    sp.decimate = 2;
    sp.noise_sigma = 0.01;
    sp.background_amp = {0.01, 0.03};

    std::vector<CasePair<float>> cases;
    for (int i = 0; i < 32; ++i) {
        auto c = synth_case<float>(15, i, sp);
        normalize_zscore(c.vol_t);
        normalize_zscore(c.vol_s);
        cases.push_back({c.spec.id, c.vol_t, c.vol_s, c.spec.label});
    }

    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 8;
    tc.lr = 1e-3;
    tc.seed = 15;
    const auto result = train<float>(tiny_config(), tc, cases);
    REQUIRE(result.epoch_loss.back() < 0.2);
    const auto model = model_from_checkpoint(result.checkpoint);

    double mass_sum = 0, box_sum = 0;
    int maps_n = 0;
    for (int i = 0; i < 8; ++i) {
        const auto spec = synth_case_spec(15, i, sp);
        const auto maps = cam(model, cases[static_cast<std::size_t>(i)].vol_t,
                              cases[static_cast<std::size_t>(i)].vol_s, 1);

        // Bounding box of the lesion, padded for the soft edge and slab smear.
        std::array<std::int64_t, 3> lo{}, hi{};
        for (int a = 0; a < 3; ++a) {
            lo[static_cast<std::size_t>(a)] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(spec.center[static_cast<std::size_t>(a)] -
                                          spec.semi_axes[static_cast<std::size_t>(a)] - 3), 0, 31);
            hi[static_cast<std::size_t>(a)] = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(spec.center[static_cast<std::size_t>(a)] +
                                          spec.semi_axes[static_cast<std::size_t>(a)] + 3), 0, 31);
        }
        const auto mass_fraction = [&](const Tensor<float>& map) {
            double inside = 0, sum = 0;
            for (std::int64_t h = 0; h < 32; ++h)
                for (std::int64_t w = 0; w < 32; ++w)
                    for (std::int64_t d = 0; d < 32; ++d) {
                        const double v = map[(h * 32 + w) * 32 + d];
                        sum += v;
                        if (h >= lo[0] && h <= hi[0] && w >= lo[1] && w <= hi[1] && d >= lo[2] && d <= hi[2])
                            inside += v;
                    }
            return sum > 0 ? inside / sum : 0.0;
        };
        const double box_fraction =
            static_cast<double>((hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1)) / (32.0 * 32.0 * 32.0);
        for (const auto* map : {&maps.map_t, &maps.map_s}) {
            mass_sum += mass_fraction(*map);
            box_sum += box_fraction;
            maps_n += 1;
        }
    }
    // Averaged over cases and views, the evidence should be clearly enriched
    // inside the boxes relative to the uniform baseline.
    REQUIRE(maps_n == 16);
    REQUIRE(mass_sum > 1.10 * box_sum);
}

TEST_CASE("cli drives synth, train, eval, cam and ablate end to end") {
    const auto dir = fresh_dir("cli");
    const auto data_dir = (dir / "data").string();
    const auto manifest = (fs::path(data_dir) / "manifest.csv").string();

    REQUIRE(run_cli({"synth-data", "--out", data_dir, "--n", "6", "--size", "32", "--seed", "7",
                     "--train-fraction", "0.67"}) == 0);
    REQUIRE(fs::exists(manifest));

    nlohmann::json cfg{{"model", tiny_config()}, {"train", TrainConfig{}}};
    cfg["train"]["epochs"] = 2;
    cfg["train"]["batch_size"] = 2;
    cfg["train"]["lr"] = 1e-3;
    const auto cfg_path = (dir / "config.json").string();
    std::ofstream(cfg_path) << cfg.dump(2);

    const auto ck_path = (dir / "model.ckpt").string();
    const auto log_path = (dir / "train.csv").string();
    REQUIRE(run_cli({"train", "--manifest", manifest, "--config", cfg_path, "--out", ck_path, "--log",
                     log_path, "--val"}) == 0);
    REQUIRE(fs::exists(ck_path));
    {
        std::ifstream is(log_path);
        std::string line;
        std::vector<std::string> lines;
        while (std::getline(is, line)) lines.push_back(line);
        REQUIRE(lines.size() == 3);
    }

    const auto metrics_path = (dir / "metrics.json").string();
    REQUIRE(run_cli({"eval", "--checkpoint", ck_path, "--manifest", manifest, "--split", "test", "--out",
                     metrics_path}) == 0);
    {
        std::ifstream is(metrics_path);
        const auto j = nlohmann::json::parse(is);
        REQUIRE(j.contains("auc"));
        REQUIRE(j.at("tp").get<std::int64_t>() + j.at("fp").get<std::int64_t>() +
                    j.at("tn").get<std::int64_t>() + j.at("fn").get<std::int64_t>() ==
                2);
    }

    const auto cam_dir = (dir / "cam").string();
    REQUIRE(run_cli({"cam", "--checkpoint", ck_path, "--manifest", manifest, "--case", "case0000",
                     "--stage", "4", "--out", cam_dir}) == 0);
    const auto map = load_volume<float>((fs::path(cam_dir) / "case0000_cam_t.raw").string());
    REQUIRE(map.shape() == Shape{32, 32, 32});

    const auto ablate_path = (dir / "ablation.csv").string();
    REQUIRE(run_cli({"ablate", "--manifest", manifest, "--config", cfg_path, "--epochs", "1", "--out",
                     ablate_path}) == 0);
    {
        std::ifstream is(ablate_path);
        std::string line;
        std::vector<std::string> lines;
        while (std::getline(is, line)) lines.push_back(line);
        REQUIRE(lines.size() == 9);
        REQUIRE(lines[1].rfind("TV,", 0) == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli reports usage and data errors with distinct exit codes") {
    REQUIRE(run_cli({"train", "--bogus-flag"}) == 2);
    REQUIRE(run_cli({"no-such-command"}) == 2);
    REQUIRE(run_cli({"train", "--manifest", "/nonexistent/manifest.csv", "--out", "/tmp/x.ckpt"}) == 3);
    REQUIRE(run_cli({"eval", "--checkpoint", "/nonexistent.ckpt", "--manifest", "/nonexistent.csv"}) == 3);
    REQUIRE(run_cli({"synth-data", "--out", (fs::temp_directory_path() / "hva_bad_size").string(), "--n",
                     "6", "--size", "33"}) == 3);
}
