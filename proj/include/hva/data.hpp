#pragma once

// On-disk case format and loading. A volume is a raw little-endian float32
// array in C order (D fastest) plus a JSON sidecar carrying shape, view and
// voxel spacing; a dataset is a CSV manifest of id, per-view paths, label and
// split. Volumes are z-scored at load.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hva/tensor.hpp"

namespace hva {

template <typename Real>
struct CasePair {
    std::string id;
    Tensor<Real> vol_t, vol_s;  // (H, W, D)
    int label = 0;
};

struct ManifestRow {
    std::string id;
    std::string path_t, path_s;  // relative to the manifest's directory
    int label = 0;
    std::string split;  // "train" or "test"
};

struct Manifest {
    std::vector<ManifestRow> rows;

    void validate() const {
        std::set<std::string> ids;
        for (const auto& r : rows) {
            if (!ids.insert(r.id).second) throw data_error(str_cat("manifest: duplicate id ", r.id));
            if (r.split != "train" && r.split != "test")
                throw data_error(str_cat("manifest: bad split '", r.split, "' for id ", r.id));
        }
    }

    std::vector<ManifestRow> split(const std::string& which) const {
        std::vector<ManifestRow> out;
        for (const auto& r : rows)
            if (r.split == which) out.push_back(r);
        return out;
    }
};

inline void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw data_error(str_cat("save_manifest: cannot open ", path));
    os << "id,path_t,path_s,label,split\n";
    for (const auto& r : m.rows)
        os << r.id << ',' << r.path_t << ',' << r.path_s << ',' << r.label << ',' << r.split << '\n';
    if (!os) throw data_error(str_cat("save_manifest: write failed for ", path));
}

inline Manifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error(str_cat("load_manifest: cannot open ", path));
    std::string line;
    if (!std::getline(is, line) || line != "id,path_t,path_s,label,split")
        throw data_error(str_cat("load_manifest: bad header in ", path));
    Manifest m;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ManifestRow r;
        std::string label;
        if (!std::getline(ss, r.id, ',') || !std::getline(ss, r.path_t, ',') ||
            !std::getline(ss, r.path_s, ',') || !std::getline(ss, label, ',') || !std::getline(ss, r.split))
            throw data_error(str_cat("load_manifest: malformed row '", line, "'"));
        try {
            r.label = std::stoi(label);
        } catch (const std::exception&) {
            throw data_error(str_cat("load_manifest: bad label '", label, "' for id ", r.id));
        }
        m.rows.push_back(std::move(r));
    }
    m.validate();
    return m;
}

// Sidecar path for a .raw volume: same stem, .json extension.
inline std::string sidecar_path(const std::string& raw_path) {
    return (std::filesystem::path(raw_path).replace_extension(".json")).string();
}

template <typename Real>
void save_volume(const std::string& raw_path, const Tensor<Real>& v, const std::string& view,
                 const std::array<double, 3>& spacing = {1.0, 1.0, 1.0}) {
    if (v.rank() != 3) fail_shape("save_volume: expected (H,W,D), got ", shape_str(v.shape()));
    std::ofstream os(raw_path, std::ios::binary | std::ios::trunc);
    if (!os) throw data_error(str_cat("save_volume: cannot open ", raw_path));
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        const float f = static_cast<float>(v[i]);
        os.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
    if (!os) throw data_error(str_cat("save_volume: write failed for ", raw_path));

    nlohmann::json meta{{"shape", v.shape()}, {"view", view}, {"spacing", spacing}};
    std::ofstream ms(sidecar_path(raw_path), std::ios::trunc);
    if (!ms) throw data_error(str_cat("save_volume: cannot open ", sidecar_path(raw_path)));
    ms << meta.dump(2) << '\n';
}

template <typename Real>
Tensor<Real> load_volume(const std::string& raw_path) {
    std::ifstream ms(sidecar_path(raw_path));
    if (!ms) throw data_error(str_cat("load_volume: missing sidecar ", sidecar_path(raw_path)));
    nlohmann::json meta = nlohmann::json::parse(ms, nullptr, false);
    if (meta.is_discarded() || !meta.contains("shape"))
        throw data_error(str_cat("load_volume: malformed sidecar ", sidecar_path(raw_path)));
    Shape shape = meta.at("shape").get<Shape>();
    if (shape.size() != 3) throw data_error(str_cat("load_volume: sidecar shape must be rank 3 for ", raw_path));

    std::ifstream is(raw_path, std::ios::binary | std::ios::ate);
    if (!is) throw data_error(str_cat("load_volume: cannot open ", raw_path));
    const auto bytes = static_cast<std::uint64_t>(is.tellg());
    if (bytes != sizeof(float) * static_cast<std::uint64_t>(shape_numel(shape)))
        throw data_error(str_cat("load_volume: ", raw_path, " holds ", bytes, " bytes, sidecar shape ",
                                 shape_str(shape), " needs ", sizeof(float) * shape_numel(shape)));
    is.seekg(0);
    Tensor<Real> v(shape);
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        float f = 0;
        is.read(reinterpret_cast<char*>(&f), sizeof(f));
        v[i] = static_cast<Real>(f);
    }
    if (!is) throw data_error(str_cat("load_volume: short read from ", raw_path));
    if (!v.all_finite()) throw data_error(str_cat("load_volume: non-finite intensities in ", raw_path));
    return v;
}

// Per-volume z-score; a (near-)constant volume becomes all zeros.
template <typename Real>
void normalize_zscore(Tensor<Real>& v) {
    const std::int64_t n = v.numel();
    double mean = 0;
    for (std::int64_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = v[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
        v.fill(Real(0));
        return;
    }
    for (std::int64_t i = 0; i < n; ++i) v[i] = static_cast<Real>((v[i] - mean) / sd);
}

template <typename Real>
CasePair<Real> load_case(const ManifestRow& row, const std::string& base_dir) {
    const auto resolve = [&](const std::string& p) {
        return (std::filesystem::path(base_dir) / p).string();
    };
    CasePair<Real> c;
    c.id = row.id;
    c.label = row.label;
    c.vol_t = load_volume<Real>(resolve(row.path_t));
    c.vol_s = load_volume<Real>(resolve(row.path_s));
    normalize_zscore(c.vol_t);
    normalize_zscore(c.vol_s);
    return c;
}

// Trilinear resize with corner-aligned sampling, so identity sizes and linear
// ramps reproduce exactly.
template <typename Real>
Tensor<Real> resize_volume(const Tensor<Real>& v, const std::array<std::int64_t, 3>& target) {
    if (v.rank() != 3) fail_shape("resize_volume: expected (H,W,D), got ", shape_str(v.shape()));
    const std::int64_t h0 = v.dim(0), w0 = v.dim(1), d0 = v.dim(2);
    const std::int64_t h1 = target[0], w1 = target[1], d1 = target[2];
    if (h1 < 1 || w1 < 1 || d1 < 1) fail_shape("resize_volume: bad target extents");
    if (h0 == h1 && w0 == w1 && d0 == d1) return v;

    const auto coord = [](std::int64_t out, std::int64_t n_out, std::int64_t n_in) {
        return n_out == 1 ? 0.0
                          : static_cast<double>(out) * static_cast<double>(n_in - 1) /
                                static_cast<double>(n_out - 1);
    };
    Tensor<Real> out({h1, w1, d1});
    for (std::int64_t i = 0; i < h1; ++i) {
        const double x = coord(i, h1, h0);
        const auto x0 = static_cast<std::int64_t>(x);
        const std::int64_t x1 = std::min(x0 + 1, h0 - 1);
        const double fx = x - static_cast<double>(x0);
        for (std::int64_t j = 0; j < w1; ++j) {
            const double y = coord(j, w1, w0);
            const auto y0 = static_cast<std::int64_t>(y);
            const std::int64_t y1 = std::min(y0 + 1, w0 - 1);
            const double fy = y - static_cast<double>(y0);
            for (std::int64_t k = 0; k < d1; ++k) {
                const double z = coord(k, d1, d0);
                const auto z0 = static_cast<std::int64_t>(z);
                const std::int64_t z1 = std::min(z0 + 1, d0 - 1);
                const double fz = z - static_cast<double>(z0);
                const auto at = [&](std::int64_t a, std::int64_t b, std::int64_t c) {
                    return static_cast<double>(v[(a * w0 + b) * d0 + c]);
                };
                const double c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
                const double c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
                const double c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
                const double c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
                const double c0 = c00 * (1 - fy) + c10 * fy;
                const double c1 = c01 * (1 - fy) + c11 * fy;
                out[(i * w1 + j) * d1 + k] = static_cast<Real>(c0 * (1 - fz) + c1 * fz);
            }
        }
    }
    return out;
}

}  // namespace hva
