#pragma once

// Command-line front end. Every subcommand is a thin wrapper over one library
// call; all heavy lifting lives in the headers above so it stays testable
// without spawning processes.
//
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hva/cam.hpp"
#include "hva/synth.hpp"
#include "hva/train.hpp"

namespace hva {

struct AblationRow {
    std::string name;
    bool use_transverse, use_sagittal, use_iva, use_cva, use_hvaf;
};

// The dual-vs-single/attention grid the `ablate` subcommand sweeps.
inline std::vector<AblationRow> ablation_grid() {
    return {
        {"TV", true, false, false, false, false},
        {"SV", false, true, false, false, false},
        {"TV+IVA", true, false, true, false, false},
        {"SV+IVA", false, true, true, false, false},
        {"TV+SV", true, true, false, false, false},
        {"TV+SV+IVA", true, true, true, false, false},
        {"TV+SV+IVA+CVA", true, true, true, true, false},
        {"TV+SV+IVA+CVA+HVAF", true, true, true, true, true},
    };
}

inline ModelConfig apply_ablation(ModelConfig cfg, const AblationRow& row) {
    cfg.use_transverse = row.use_transverse;
    cfg.use_sagittal = row.use_sagittal;
    cfg.use_iva = row.use_iva;
    cfg.use_cva = row.use_cva;
    cfg.use_hvaf = row.use_hvaf;
    return cfg;
}

template <typename Real>
struct AblationResult {
    AblationRow row;
    MetricsReport metrics;
};

// Trains and evaluates every grid row with shared configs and data.
template <typename Real>
std::vector<AblationResult<Real>> run_ablation(const ModelConfig& base_cfg, const TrainConfig& train_cfg,
                                               const std::vector<CasePair<Real>>& train_set,
                                               const std::vector<CasePair<Real>>& test_set) {
    std::vector<AblationResult<Real>> results;
    for (const auto& row : ablation_grid()) {
        const ModelConfig cfg = apply_ablation(base_cfg, row);
        const auto trained = train<Real>(cfg, train_cfg, train_set);
        results.push_back({row, evaluate(trained.checkpoint, test_set, train_cfg.threshold)});
    }
    return results;
}

template <typename Real>
void write_ablation_csv(const std::string& path, const std::vector<AblationResult<Real>>& results) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw data_error(str_cat("write_ablation_csv: cannot open ", path));
    os << "name,use_transverse,use_sagittal,use_iva,use_cva,use_hvaf,auc,f1,accuracy,sensitivity,specificity\n";
    const auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& r : results) {
        os << r.row.name << ',' << r.row.use_transverse << ',' << r.row.use_sagittal << ',' << r.row.use_iva
           << ',' << r.row.use_cva << ',' << r.row.use_hvaf << ',' << cell(r.metrics.auc) << ','
           << cell(r.metrics.f1) << ',' << cell(r.metrics.accuracy) << ',' << cell(r.metrics.sensitivity)
           << ',' << cell(r.metrics.specificity) << '\n';
    }
    if (!os) throw data_error(str_cat("write_ablation_csv: write failed for ", path));
}

namespace detail {

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> size;
    std::optional<std::int64_t> epochs;
    std::optional<double> lr;
    std::optional<std::int64_t> batch_size;
};

inline void load_configs(const CliOptions& opt, ModelConfig& model_cfg, TrainConfig& train_cfg) {
    if (!opt.config_path.empty()) {
        std::ifstream is(opt.config_path);
        if (!is) throw data_error(str_cat("config: cannot open ", opt.config_path));
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw data_error(str_cat("config: malformed JSON in ", opt.config_path));
        if (j.contains("model")) model_cfg = j.at("model").get<ModelConfig>();
        if (j.contains("train")) train_cfg = j.at("train").get<TrainConfig>();
    }
    if (opt.size) model_cfg.input_size = {*opt.size, *opt.size, *opt.size};
    if (opt.seed) {
        model_cfg.seed = *opt.seed;
        train_cfg.seed = *opt.seed;
    }
    if (opt.epochs) train_cfg.epochs = *opt.epochs;
    if (opt.lr) train_cfg.lr = *opt.lr;
    if (opt.batch_size) train_cfg.batch_size = *opt.batch_size;
}

template <typename Real>
std::vector<CasePair<Real>> load_split(const std::string& manifest_path, const std::string& data_dir,
                                       const std::string& split) {
    const Manifest manifest = load_manifest(manifest_path);
    const std::string base =
        data_dir.empty() ? std::filesystem::path(manifest_path).parent_path().string() : data_dir;
    std::vector<CasePair<Real>> cases;
    for (const auto& row : manifest.split(split)) cases.push_back(load_case<Real>(row, base));
    if (cases.empty())
        throw data_error(str_cat("manifest ", manifest_path, " has no '", split, "' cases"));
    return cases;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Dual-view 3D volume classifier: data synthesis, training, evaluation, ablation, CAM export"};
    app.require_subcommand(1);

    detail::CliOptions opt;

    // synth-data
    auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic dual-view phantom dataset");
    std::string synth_out;
    std::int64_t synth_n = 500, synth_size = 32;
    std::uint64_t synth_seed = 7;
    double synth_train_fraction = 0.8;
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--n", synth_n, "Number of cases");
    synth_cmd->add_option("--size", synth_size, "Cubic volume extent (multiple of 32)");
    synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--train-fraction", synth_train_fraction, "Leading fraction assigned to train");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest's train split");
    std::string train_manifest, train_data_dir, train_out, train_log, train_resume;
    bool train_val = false;
    train_cmd->add_option("--manifest", train_manifest, "Manifest CSV")->required();
    train_cmd->add_option("--data-dir", train_data_dir, "Base directory for manifest paths");
    train_cmd->add_option("--config", opt.config_path, "JSON config with model/train sections");
    train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
    train_cmd->add_option("--log", train_log, "Per-epoch CSV log path");
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");
    train_cmd->add_flag("--val", train_val, "Evaluate the test split after each epoch");
    train_cmd->add_option("--seed", opt.seed, "Override model and train seeds");
    train_cmd->add_option("--size", opt.size, "Override cubic input size");
    train_cmd->add_option("--epochs", opt.epochs, "Override epoch count");
    train_cmd->add_option("--lr", opt.lr, "Override learning rate");
    train_cmd->add_option("--batch-size", opt.batch_size, "Override batch size");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
    std::string eval_checkpoint, eval_manifest, eval_data_dir, eval_out, eval_split = "test";
    double eval_threshold = 0.5;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "Manifest CSV")->required();
    eval_cmd->add_option("--data-dir", eval_data_dir, "Base directory for manifest paths");
    eval_cmd->add_option("--split", eval_split, "Manifest split to evaluate");
    eval_cmd->add_option("--threshold", eval_threshold, "Decision threshold");
    eval_cmd->add_option("--out", eval_out, "Write the metrics JSON here instead of stdout");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate the view/attention ablation grid");
    std::string ablate_manifest, ablate_data_dir, ablate_out;
    ablate_cmd->add_option("--manifest", ablate_manifest, "Manifest CSV")->required();
    ablate_cmd->add_option("--data-dir", ablate_data_dir, "Base directory for manifest paths");
    ablate_cmd->add_option("--config", opt.config_path, "JSON config with model/train sections");
    ablate_cmd->add_option("--out", ablate_out, "Combined CSV output path")->required();
    ablate_cmd->add_option("--seed", opt.seed, "Override model and train seeds");
    ablate_cmd->add_option("--size", opt.size, "Override cubic input size");
    ablate_cmd->add_option("--epochs", opt.epochs, "Override epoch count");
    ablate_cmd->add_option("--lr", opt.lr, "Override learning rate");
    ablate_cmd->add_option("--batch-size", opt.batch_size, "Override batch size");

    // cam
    auto* cam_cmd = app.add_subcommand("cam", "Export per-view activation heatmaps for one case");
    std::string cam_checkpoint, cam_manifest, cam_data_dir, cam_case, cam_out;
    int cam_stage = 4;
    cam_cmd->add_option("--checkpoint", cam_checkpoint, "Checkpoint path")->required();
    cam_cmd->add_option("--manifest", cam_manifest, "Manifest CSV")->required();
    cam_cmd->add_option("--data-dir", cam_data_dir, "Base directory for manifest paths");
    cam_cmd->add_option("--case", cam_case, "Case id from the manifest")->required();
    cam_cmd->add_option("--stage", cam_stage, "Encoder stage to visualize (1-4)");
    cam_cmd->add_option("--out", cam_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) {
            const auto manifest = synth_generate(synth_n, synth_size, synth_seed, synth_out, synth_train_fraction);
            std::cout << "wrote " << manifest.rows.size() << " cases to " << synth_out << '\n';
            return 0;
        }

        if (train_cmd->parsed()) {
            ModelConfig model_cfg;
            TrainConfig train_cfg;
            detail::load_configs(opt, model_cfg, train_cfg);
            auto train_set = detail::load_split<float>(train_manifest, train_data_dir, "train");
            std::vector<CasePair<float>> val_set;
            if (train_val) val_set = detail::load_split<float>(train_manifest, train_data_dir, "test");
            std::optional<Checkpoint<float>> resume;
            if (!train_resume.empty()) resume = load_checkpoint<float>(train_resume);
            const auto result = train<float>(model_cfg, train_cfg, train_set, val_set, train_log,
                                             resume ? &*resume : nullptr);
            save_checkpoint(train_out, result.checkpoint);
            std::cout << "final epoch loss " << result.epoch_loss.back() << ", checkpoint " << train_out
                      << '\n';
            return 0;
        }

        if (eval_cmd->parsed()) {
            const auto ck = load_checkpoint<float>(eval_checkpoint);
            const auto cases = detail::load_split<float>(eval_manifest, eval_data_dir, eval_split);
            const MetricsReport report = evaluate(ck, cases, eval_threshold);
            const nlohmann::json j = report;
            if (eval_out.empty()) {
                std::cout << j.dump(2) << '\n';
            } else {
                std::ofstream os(eval_out, std::ios::trunc);
                if (!os) throw data_error(str_cat("eval: cannot open ", eval_out));
                os << j.dump(2) << '\n';
            }
            return 0;
        }

        if (ablate_cmd->parsed()) {
            ModelConfig model_cfg;
            TrainConfig train_cfg;
            detail::load_configs(opt, model_cfg, train_cfg);
            const auto train_set = detail::load_split<float>(ablate_manifest, ablate_data_dir, "train");
            const auto test_set = detail::load_split<float>(ablate_manifest, ablate_data_dir, "test");
            const auto results = run_ablation<float>(model_cfg, train_cfg, train_set, test_set);
            write_ablation_csv(ablate_out, results);
            std::cout << "wrote " << results.size() << " ablation rows to " << ablate_out << '\n';
            return 0;
        }

        if (cam_cmd->parsed()) {
            const auto ck = load_checkpoint<float>(cam_checkpoint);
            const Manifest manifest = load_manifest(cam_manifest);
            const std::string base = cam_data_dir.empty()
                                         ? std::filesystem::path(cam_manifest).parent_path().string()
                                         : cam_data_dir;
            const ManifestRow* row = nullptr;
            for (const auto& r : manifest.rows)
                if (r.id == cam_case) row = &r;
            if (!row) throw data_error(str_cat("cam: case ", cam_case, " not found in ", cam_manifest));
            const auto pair = load_case<float>(*row, base);
            const auto maps = cam(ck, pair, cam_stage);
            std::filesystem::create_directories(cam_out);
            const auto dir = std::filesystem::path(cam_out);
            if (maps.map_t.numel() > 0)
                save_volume((dir / (cam_case + "_cam_t.raw")).string(), maps.map_t, "transverse");
            if (maps.map_s.numel() > 0)
                save_volume((dir / (cam_case + "_cam_s.raw")).string(), maps.map_s, "sagittal");
            std::cout << "wrote heatmaps for " << cam_case << " to " << cam_out << '\n';
            return 0;
        }
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace hva
