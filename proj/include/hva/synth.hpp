#pragma once

// Synthetic dual-view phantom task. Each case is a smooth background plus one
// soft-edged ellipsoid lesion; the label says whether the lesion is elongated
// along a per-case direction (H or D). Each view is then degraded along its
// imaging axis (blur, 8x slab decimation, linear re-interpolation), so the
// elongation is reliably measurable only by combining both views:
// the transverse view loses the D axis, the sagittal view loses H, and W is
// never the labeled direction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hva/data.hpp"

namespace hva {

struct SynthParams {
    std::int64_t size = 32;
    double tau = 1.3;                       // elongation threshold defining the label
    std::array<double, 2> elong_pos{1.5, 1.85};
    std::array<double, 2> elong_neg{0.85, 1.15};
    std::array<double, 2> radius_frac{0.13, 0.18};  // base radius as a fraction of size
    std::array<double, 2> center_frac{0.40, 0.60};  // lesion center as a fraction of size
    std::array<double, 2> contrast{0.45, 0.65};
    double edge_width = 0.15;               // soft-boundary width in normalized radius
    double blur_sigma = 3.5;                // voxels, along the imaging axis
    std::int64_t decimate = 8;
    double noise_sigma = 0.02;
    int background_waves = 4;
    std::array<double, 2> background_amp{0.03, 0.08};
};

struct SynthCaseSpec {
    std::string id;
    int label = 0;
    int direction = 2;  // axis index of the elongation: 0 = H, 2 = D
    double elongation = 1.0;
    std::array<double, 3> semi_axes{};  // (H, W, D) in voxels
    std::array<double, 3> center{};     // voxel coordinates
    double contrast = 0.0;
    double base_radius = 0.0;
};

inline void to_json(nlohmann::json& j, const SynthCaseSpec& s) {
    j = nlohmann::json{{"id", s.id},
                       {"label", s.label},
                       {"direction", s.direction == 0 ? "H" : "D"},
                       {"elongation", s.elongation},
                       {"semi_axes", s.semi_axes},
                       {"center", s.center},
                       {"contrast", s.contrast},
                       {"base_radius", s.base_radius}};
}

namespace detail {

inline std::uint64_t case_seed(std::uint64_t seed, std::int64_t index) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(index + 1));
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    return x;
}

// Gaussian blur along one axis with replicated edges.
template <typename Real>
void blur_axis(Tensor<Real>& v, int axis, double sigma) {
    const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (std::int64_t k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    const std::int64_t h = v.dim(0), w_ = v.dim(1), d = v.dim(2);
    const std::int64_t extent = axis == 0 ? h : axis == 1 ? w_ : d;
    Tensor<Real> out(v.shape());
    std::vector<double> line(static_cast<std::size_t>(extent));
    const auto index = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return (i * w_ + j) * d + k; };
    const std::int64_t n_outer1 = axis == 0 ? w_ : h;
    const std::int64_t n_outer2 = axis == 2 ? w_ : d;
    for (std::int64_t a = 0; a < n_outer1; ++a)
        for (std::int64_t b = 0; b < n_outer2; ++b) {
            const auto flat = [&](std::int64_t t) {
                if (axis == 0) return index(t, a, b);
                if (axis == 1) return index(a, t, b);
                return index(a, b, t);
            };
            for (std::int64_t t = 0; t < extent; ++t) line[static_cast<std::size_t>(t)] = v[flat(t)];
            for (std::int64_t t = 0; t < extent; ++t) {
                double acc = 0;
                for (std::int64_t k = -radius; k <= radius; ++k) {
                    const std::int64_t src = std::clamp<std::int64_t>(t + k, 0, extent - 1);
                    acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(src)];
                }
                out[flat(t)] = static_cast<Real>(acc);
            }
        }
    v = std::move(out);
}

// Keeps only every `factor`-th sample along the axis and fills the gaps by
// linear interpolation on the original grid, mimicking thick acquired slices.
template <typename Real>
void slab_axis(Tensor<Real>& v, int axis, std::int64_t factor) {
    const std::int64_t h = v.dim(0), w_ = v.dim(1), d = v.dim(2);
    const std::int64_t extent = axis == 0 ? h : axis == 1 ? w_ : d;
    const std::int64_t last = ((extent - 1) / factor) * factor;
    Tensor<Real> out(v.shape());
    const auto index = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return (i * w_ + j) * d + k; };
    const std::int64_t n_outer1 = axis == 0 ? w_ : h;
    const std::int64_t n_outer2 = axis == 2 ? w_ : d;
    for (std::int64_t a = 0; a < n_outer1; ++a)
        for (std::int64_t b = 0; b < n_outer2; ++b) {
            const auto flat = [&](std::int64_t t) {
                if (axis == 0) return index(t, a, b);
                if (axis == 1) return index(a, t, b);
                return index(a, b, t);
            };
            for (std::int64_t t = 0; t < extent; ++t) {
                const std::int64_t lo = std::min((t / factor) * factor, last);
                const std::int64_t hi = std::min(lo + factor, last);
                const double frac = hi == lo ? 0.0 : static_cast<double>(t - lo) / static_cast<double>(factor);
                out[flat(t)] = static_cast<Real>((1.0 - frac) * v[flat(lo)] + frac * v[flat(hi)]);
            }
        }
    v = std::move(out);
}

}  // namespace detail

inline SynthCaseSpec synth_case_spec(std::uint64_t seed, std::int64_t index, const SynthParams& sp) {
    Rng rng(detail::case_seed(seed, index));
    SynthCaseSpec spec;
    spec.id = str_cat("case", index < 10 ? "000" : index < 100 ? "00" : index < 1000 ? "0" : "", index);
    spec.label = static_cast<int>(index % 2);
    spec.direction = rng.uniform() < 0.5 ? 0 : 2;
    spec.elongation = spec.label ? rng.uniform(sp.elong_pos[0], sp.elong_pos[1])
                                 : rng.uniform(sp.elong_neg[0], sp.elong_neg[1]);
    spec.base_radius = rng.uniform(sp.radius_frac[0], sp.radius_frac[1]) * static_cast<double>(sp.size);
    // Constant-volume split: the labeled axis gets e^(2/3), the others e^(-1/3).
    const double along = spec.base_radius * std::pow(spec.elongation, 2.0 / 3.0);
    const double across = spec.base_radius * std::pow(spec.elongation, -1.0 / 3.0);
    for (int a = 0; a < 3; ++a) spec.semi_axes[static_cast<std::size_t>(a)] = a == spec.direction ? along : across;
    for (int a = 0; a < 3; ++a)
        spec.center[static_cast<std::size_t>(a)] = rng.uniform(sp.center_frac[0], sp.center_frac[1]) * static_cast<double>(sp.size);
    spec.contrast = rng.uniform(sp.contrast[0], sp.contrast[1]);
    return spec;
}

// Clean phantom at full resolution, before any view degradation.
template <typename Real>
Tensor<Real> synth_phantom(std::uint64_t seed, std::int64_t index, const SynthParams& sp,
                           const SynthCaseSpec& spec) {
    Rng rng(detail::case_seed(seed, index) ^ 0xA5A5A5A5A5A5A5A5ull);
    const std::int64_t n = sp.size;

    struct Wave {
        std::array<double, 3> freq;
        double phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < sp.background_waves; ++k) {
        Wave w;
        for (auto& f : w.freq) f = rng.uniform(-1.5, 1.5) * 6.283185307179586 / static_cast<double>(n);
        w.phase = rng.uniform(0.0, 6.283185307179586);
        w.amp = rng.uniform(sp.background_amp[0], sp.background_amp[1]);
        waves.push_back(w);
    }

    Tensor<Real> v({n, n, n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            for (std::int64_t k = 0; k < n; ++k) {
                double val = 0;
                for (const auto& w : waves)
                    val += w.amp * std::cos(w.freq[0] * i + w.freq[1] * j + w.freq[2] * k + w.phase);
                const double dh = (static_cast<double>(i) - spec.center[0]) / spec.semi_axes[0];
                const double dw = (static_cast<double>(j) - spec.center[1]) / spec.semi_axes[1];
                const double dd = (static_cast<double>(k) - spec.center[2]) / spec.semi_axes[2];
                const double rho = std::sqrt(dh * dh + dw * dw + dd * dd);
                val += spec.contrast / (1.0 + std::exp((rho - 1.0) / sp.edge_width));
                v[(i * n + j) * n + k] = static_cast<Real>(val);
            }
    return v;
}

template <typename Real>
struct SynthCase {
    SynthCaseSpec spec;
    Tensor<Real> vol_t, vol_s;
};

// One fully degraded case: transverse loses the D axis, sagittal loses H,
// with independent acquisition noise per view.
template <typename Real>
SynthCase<Real> synth_case(std::uint64_t seed, std::int64_t index, const SynthParams& sp) {
    SynthCase<Real> out;
    out.spec = synth_case_spec(seed, index, sp);
    const auto clean = synth_phantom<Real>(seed, index, sp, out.spec);

    const auto degrade = [&](int axis) {
        Tensor<Real> v = clean;
        detail::blur_axis(v, axis, sp.blur_sigma);
        detail::slab_axis(v, axis, sp.decimate);
        return v;
    };
    out.vol_t = degrade(2);
    out.vol_s = degrade(0);

    Rng noise(detail::case_seed(seed, index) ^ 0x5C5C5C5C5C5C5C5Cull);
    for (std::int64_t i = 0; i < out.vol_t.numel(); ++i)
        out.vol_t[i] += static_cast<Real>(noise.normal(0.0, sp.noise_sigma));
    for (std::int64_t i = 0; i < out.vol_s.numel(); ++i)
        out.vol_s[i] += static_cast<Real>(noise.normal(0.0, sp.noise_sigma));
    return out;
}

// Writes n cases plus per-case metadata and a manifest; the leading
// train_fraction of cases form the train split. Labels alternate, so both
// splits stay balanced to within one case.
inline Manifest synth_generate(std::int64_t n_cases, std::int64_t size, std::uint64_t seed,
                               const std::string& out_dir, double train_fraction = 0.8,
                               const SynthParams& base = SynthParams{}) {
    if (n_cases < 4) throw data_error(str_cat("synth_generate: need at least 4 cases, got ", n_cases));
    if (size < 32 || size % 32 != 0)
        throw data_error(str_cat("synth_generate: size ", size, " must be a positive multiple of 32"));
    SynthParams sp = base;
    sp.size = size;
    std::filesystem::create_directories(out_dir);

    Manifest manifest;
    const auto n_train = static_cast<std::int64_t>(std::floor(train_fraction * static_cast<double>(n_cases)));
    for (std::int64_t i = 0; i < n_cases; ++i) {
        const auto c = synth_case<float>(seed, i, sp);
        ManifestRow row;
        row.id = c.spec.id;
        row.path_t = c.spec.id + "_t.raw";
        row.path_s = c.spec.id + "_s.raw";
        row.label = c.spec.label;
        row.split = i < n_train ? "train" : "test";
        const auto dir = std::filesystem::path(out_dir);
        save_volume((dir / row.path_t).string(), c.vol_t, "transverse");
        save_volume((dir / row.path_s).string(), c.vol_s, "sagittal");

        nlohmann::json meta = c.spec;
        meta["tau"] = sp.tau;
        meta["split"] = row.split;
        std::ofstream ms(dir / (c.spec.id + "_meta.json"), std::ios::trunc);
        if (!ms) throw data_error(str_cat("synth_generate: cannot write metadata for ", c.spec.id));
        ms << meta.dump(2) << '\n';
        manifest.rows.push_back(std::move(row));
    }
    save_manifest((std::filesystem::path(out_dir) / "manifest.csv").string(), manifest);
    return manifest;
}

}  // namespace hva
