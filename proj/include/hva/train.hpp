#pragma once

// Training loop (Adam on focal loss over sigmoid probabilities) and the
// evaluation protocol. Single-threaded and fully determined by the two
// configs, the dataset and the seed; resuming from a checkpoint replays the
// exact remainder of an uninterrupted run.

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "hva/checkpoint.hpp"
#include "hva/data.hpp"
#include "hva/loss.hpp"
#include "hva/metrics.hpp"
#include "hva/network.hpp"
#include "hva/optim.hpp"

namespace hva {

struct TrainConfig {
    double lr = 1e-4;
    std::int64_t epochs = 100;
    std::int64_t batch_size = 8;
    double focal_gamma = 2.0;
    std::optional<double> focal_alpha;  // default: negative-class fraction of the train split
    double threshold = 0.5;
    std::uint64_t seed = 0;
    bool augment = false;               // random axis flips + fresh noise per presentation
    double aug_noise_sigma = 0.1;       // in z-scored intensity units

    void validate() const {
        if (lr <= 0) throw data_error("TrainConfig: lr must be positive");
        if (epochs < 1) throw data_error("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw data_error("TrainConfig: batch_size must be >= 1");
        if (focal_gamma < 0) throw data_error("TrainConfig: focal_gamma must be >= 0");
        if (focal_alpha && (*focal_alpha <= 0 || *focal_alpha >= 1))
            throw data_error("TrainConfig: focal_alpha must lie in (0,1)");
        if (aug_noise_sigma < 0) throw data_error("TrainConfig: aug_noise_sigma must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr", c.lr},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"focal_gamma", c.focal_gamma},
                       {"threshold", c.threshold},
                       {"seed", c.seed},
                       {"augment", c.augment},
                       {"aug_noise_sigma", c.aug_noise_sigma}};
    if (c.focal_alpha) j["focal_alpha"] = *c.focal_alpha;
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    const TrainConfig defaults;
    c.lr = j.value("lr", defaults.lr);
    c.epochs = j.value("epochs", defaults.epochs);
    c.batch_size = j.value("batch_size", defaults.batch_size);
    c.focal_gamma = j.value("focal_gamma", defaults.focal_gamma);
    c.threshold = j.value("threshold", defaults.threshold);
    c.seed = j.value("seed", defaults.seed);
    c.augment = j.value("augment", defaults.augment);
    c.aug_noise_sigma = j.value("aug_noise_sigma", defaults.aug_noise_sigma);
    if (j.contains("focal_alpha")) c.focal_alpha = j.at("focal_alpha").get<double>();
}

namespace detail {

// Stacks cases into (B,1,H,W,D) per view, resizing when a volume does not
// already match the configured input size. Disabled views yield empty tensors.
template <typename Real>
void assemble_batch(const ModelConfig& cfg, const std::vector<CasePair<Real>>& cases,
                    const std::vector<std::size_t>& idx, Tensor<Real>& vt, Tensor<Real>& vs,
                    std::vector<int>& labels) {
    const std::int64_t b = static_cast<std::int64_t>(idx.size());
    const auto [h, w, d] = cfg.input_size;
    const std::int64_t voxels = h * w * d;
    if (cfg.use_transverse) vt = Tensor<Real>({b, 1, h, w, d});
    if (cfg.use_sagittal) vs = Tensor<Real>({b, 1, h, w, d});
    labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& c = cases[idx[i]];
        labels[i] = c.label;
        const auto copy_into = [&](const Tensor<Real>& vol, Tensor<Real>& dst) {
            const Tensor<Real> sized = vol.shape() == Shape{h, w, d} ? vol : resize_volume(vol, {h, w, d});
            std::copy(sized.data(), sized.data() + voxels, dst.data() + static_cast<std::int64_t>(i) * voxels);
        };
        if (cfg.use_transverse) copy_into(c.vol_t, vt);
        if (cfg.use_sagittal) copy_into(c.vol_s, vs);
    }
}

inline double negative_fraction(const std::vector<int>& labels) {
    std::size_t neg = 0;
    for (const int y : labels) neg += y == 0 ? 1 : 0;
    return static_cast<double>(neg) / static_cast<double>(labels.size());
}

template <typename Real>
void flip_block(Real* v, std::int64_t h, std::int64_t w, std::int64_t d, bool fh, bool fw, bool fd) {
    auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> Real& { return v[(i * w + j) * d + k]; };
    if (fh)
        for (std::int64_t i = 0; i < h / 2; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                for (std::int64_t k = 0; k < d; ++k) std::swap(at(i, j, k), at(h - 1 - i, j, k));
    if (fw)
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w / 2; ++j)
                for (std::int64_t k = 0; k < d; ++k) std::swap(at(i, j, k), at(i, w - 1 - j, k));
    if (fd)
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                for (std::int64_t k = 0; k < d / 2; ++k) std::swap(at(i, j, k), at(i, j, d - 1 - k));
}

// Label-preserving augmentation: per sample, one shared flip draw per spatial
// axis applied to both views (they image the same anatomy), then fresh
// additive noise per view so voxel noise cannot be memorized.
template <typename Real>
void augment_batch(Tensor<Real>& vt, Tensor<Real>& vs, std::int64_t b, std::int64_t h, std::int64_t w,
                   std::int64_t d, Rng& rng, double noise_sigma) {
    const std::int64_t voxels = h * w * d;
    for (std::int64_t i = 0; i < b; ++i) {
        const bool fh = rng.uniform() < 0.5;
        const bool fw = rng.uniform() < 0.5;
        const bool fd = rng.uniform() < 0.5;
        for (Tensor<Real>* v : {&vt, &vs}) {
            if (v->empty()) continue;
            Real* block = v->data() + i * voxels;
            flip_block(block, h, w, d, fh, fw, fd);
            if (noise_sigma > 0)
                for (std::int64_t e = 0; e < voxels; ++e)
                    block[e] += static_cast<Real>(noise_sigma * rng.normal());
        }
    }
}

}  // namespace detail

template <typename Real>
MetricsReport evaluate(const Model<Real>& model, const std::vector<CasePair<Real>>& cases,
                       double threshold = 0.5, std::int64_t batch_size = 8) {
    if (cases.empty()) throw data_error("evaluate: empty dataset");
    std::vector<double> probs;
    std::vector<int> labels;
    for (std::size_t start = 0; start < cases.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(cases.size(), start + static_cast<std::size_t>(batch_size)); ++i)
            idx.push_back(i);
        Tensor<Real> vt, vs;
        std::vector<int> batch_labels;
        detail::assemble_batch(model.config, cases, idx, vt, vs, batch_labels);
        const auto p = predict_proba(model, vt, vs);
        for (std::int64_t i = 0; i < p.numel(); ++i) probs.push_back(static_cast<double>(p[i]));
        labels.insert(labels.end(), batch_labels.begin(), batch_labels.end());
    }
    MetricsReport report = confusion_metrics(probs, labels, threshold);
    report.auc = auc(probs, labels);
    return report;
}

template <typename Real>
MetricsReport evaluate(const Checkpoint<Real>& ck, const std::vector<CasePair<Real>>& cases,
                       double threshold = 0.5, std::int64_t batch_size = 8) {
    const auto model = model_from_checkpoint(ck);
    return evaluate(model, cases, threshold, batch_size);
}

template <typename Real>
struct TrainResult {
    Checkpoint<Real> checkpoint;
    std::vector<double> epoch_loss;                       // mean per-case focal loss
    std::vector<std::optional<double>> epoch_val_auc;     // unset when no validation set
};

template <typename Real>
TrainResult<Real> train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const std::vector<CasePair<Real>>& train_set,
                        const std::vector<CasePair<Real>>& val_set = {}, const std::string& log_csv = "",
                        const Checkpoint<Real>* resume = nullptr) {
    train_cfg.validate();
    if (train_set.empty()) throw data_error("train: empty training set");
    std::vector<int> all_labels;
    for (const auto& c : train_set) all_labels.push_back(c.label);
    const double neg_frac = detail::negative_fraction(all_labels);
    if (neg_frac == 0.0 || neg_frac == 1.0) throw data_error("train: both classes must be present");
    const Real alpha = static_cast<Real>(train_cfg.focal_alpha.value_or(neg_frac));

    Model<Real> model = resume ? model_from_checkpoint(*resume) : build<Real>(model_cfg);
    if (resume && !(nlohmann::json(resume->config) == nlohmann::json(model_cfg)))
        throw data_error("train: resume checkpoint config differs from the requested config");

    Adam<Real> adam(model.params, static_cast<Real>(train_cfg.lr));
    Rng shuffle_rng(train_cfg.seed);
    std::int64_t start_epoch = 0;
    if (resume) {
        if (!resume->adam_m.empty()) adam.restore(resume->adam_t, resume->adam_m, resume->adam_v);
        if (!resume->rng_state.empty()) shuffle_rng.deserialize(resume->rng_state);
        start_epoch = resume->epoch;
    }

    std::ofstream log;
    if (!log_csv.empty()) {
        log.open(log_csv, resume ? std::ios::app : std::ios::trunc);
        if (!log) throw data_error(str_cat("train: cannot open log ", log_csv));
        if (!resume) log << "epoch,loss,val_auc\n";
    }

    TrainResult<Real> result;
    std::vector<std::size_t> order(train_set.size());

    for (std::int64_t epoch = start_epoch; epoch < train_cfg.epochs; ++epoch) {
        // Rebuilt from identity so each epoch's permutation depends only on the
        // rng state, which the checkpoint restores; resume then replays exactly.
        std::iota(order.begin(), order.end(), std::size_t(0));
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::vector<std::size_t> idx(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() +
                    static_cast<std::ptrdiff_t>(std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size))));
            Tensor<Real> vt, vs;
            std::vector<int> labels;
            detail::assemble_batch(model.config, train_set, idx, vt, vs, labels);
            if (train_cfg.augment) {
                const auto [h, w, d] = model.config.input_size;
                detail::augment_batch(vt, vs, static_cast<std::int64_t>(idx.size()), h, w, d, shuffle_rng,
                                      train_cfg.aug_noise_sigma);
            }

            auto logit = forward(model, vt, vs);
            auto p = sigmoid(reshape(logit, {static_cast<std::int64_t>(idx.size())}));
            auto loss = focal_loss(p, labels, alpha, static_cast<Real>(train_cfg.focal_gamma));
            const double step_loss = static_cast<double>(loss->value[0]);
            if (!std::isfinite(step_loss))
                throw numeric_error(str_cat("train: non-finite loss at epoch ", epoch, ", batch start ", start));
            model.params.zero_grads();
            backward(loss);
            adam.step();
            loss_sum += step_loss * static_cast<double>(idx.size());
        }
        const double epoch_loss = loss_sum / static_cast<double>(order.size());
        result.epoch_loss.push_back(epoch_loss);

        std::optional<double> val_auc;
        if (!val_set.empty()) {
            const auto report = evaluate(model, val_set, train_cfg.threshold, train_cfg.batch_size);
            val_auc = report.auc;
        }
        result.epoch_val_auc.push_back(val_auc);
        if (log) {
            log << epoch << ',' << epoch_loss << ',';
            if (val_auc) log << *val_auc;
            log << '\n';
            log.flush();
        }
    }

    result.checkpoint = checkpoint_from_model(model, train_cfg.epochs, &adam, &shuffle_rng);
    return result;
}

}  // namespace hva
