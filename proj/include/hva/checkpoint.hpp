#pragma once

// Checkpoint archive: a magic line, a version word, one canonical JSON header
// (config, epoch, optimizer step, RNG state, tensor table), then the raw
// little-endian tensor payload in table order. Adam moments ride along so a
// resumed run continues bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hva/network.hpp"
#include "hva/optim.hpp"

namespace hva {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline constexpr char checkpoint_magic[8] = {'H', 'V', 'A', 'C', 'K', 'P', 'T', '\n'};
inline constexpr std::uint32_t checkpoint_version = 1;

template <typename Real>
struct Checkpoint {
    ModelConfig config;
    std::int64_t epoch = 0;
    std::int64_t adam_t = 0;
    std::string rng_state;  // training shuffle stream; empty when absent
    std::vector<std::pair<std::string, Tensor<Real>>> params;
    std::vector<Tensor<Real>> adam_m, adam_v;  // aligned with params; empty when absent
};

namespace detail {

template <typename Real>
const char* checkpoint_dtype();
template <>
inline const char* checkpoint_dtype<float>() {
    return "f32";
}
template <>
inline const char* checkpoint_dtype<double>() {
    return "f64";
}

template <typename Real>
void write_tensor(std::ostream& os, const Tensor<Real>& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(Real) * static_cast<std::size_t>(t.numel())));
}

template <typename Real>
Tensor<Real> read_tensor(std::istream& is, Shape shape) {
    Tensor<Real> t(std::move(shape));
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(Real) * static_cast<std::size_t>(t.numel())));
    if (!is) throw data_error("checkpoint: truncated tensor payload");
    return t;
}

}  // namespace detail

template <typename Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ck) {
    if (!ck.adam_m.empty() && (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size()))
        throw data_error("save_checkpoint: Adam moment tables must align with the parameter list");

    nlohmann::json header;
    header["config"] = ck.config;
    header["dtype"] = detail::checkpoint_dtype<Real>();
    header["epoch"] = ck.epoch;
    header["adam_t"] = ck.adam_t;
    header["rng"] = ck.rng_state;
    nlohmann::json table = nlohmann::json::array();
    auto add_entry = [&](const char* kind, const std::string& name, const Shape& shape) {
        table.push_back({{"kind", kind}, {"name", name}, {"shape", shape}});
    };
    for (const auto& [name, t] : ck.params) add_entry("param", name, t.shape());
    for (std::size_t i = 0; i < ck.adam_m.size(); ++i) {
        add_entry("adam_m", ck.params[i].first, ck.adam_m[i].shape());
        add_entry("adam_v", ck.params[i].first, ck.adam_v[i].shape());
    }
    header["tensors"] = std::move(table);
    const std::string header_text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw data_error(str_cat("save_checkpoint: cannot open ", path));
    os.write(checkpoint_magic, sizeof(checkpoint_magic));
    const std::uint32_t version = checkpoint_version;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_text.size();
    os.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, t] : ck.params) {
        (void)name;
        detail::write_tensor(os, t);
    }
    for (std::size_t i = 0; i < ck.adam_m.size(); ++i) {
        detail::write_tensor(os, ck.adam_m[i]);
        detail::write_tensor(os, ck.adam_v[i]);
    }
    if (!os) throw data_error(str_cat("save_checkpoint: write failed for ", path));
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error(str_cat("load_checkpoint: cannot open ", path));
    char magic[sizeof(checkpoint_magic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, checkpoint_magic, sizeof(magic)) != 0)
        throw data_error(str_cat("load_checkpoint: bad magic in ", path));
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!is || version != checkpoint_version)
        throw data_error(str_cat("load_checkpoint: unsupported version ", version));
    std::uint64_t header_len = 0;
    is.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    is.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw data_error("load_checkpoint: truncated header");

    nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
    if (header.is_discarded()) throw data_error("load_checkpoint: malformed header JSON");
    if (header.value("dtype", "") != detail::checkpoint_dtype<Real>())
        throw data_error(str_cat("load_checkpoint: dtype ", header.value("dtype", "?"), " does not match"));

    Checkpoint<Real> ck;
    ck.config = header.at("config").get<ModelConfig>();
    ck.epoch = header.at("epoch").get<std::int64_t>();
    ck.adam_t = header.at("adam_t").get<std::int64_t>();
    ck.rng_state = header.at("rng").get<std::string>();
    for (const auto& entry : header.at("tensors")) {
        const std::string kind = entry.at("kind").get<std::string>();
        const std::string name = entry.at("name").get<std::string>();
        Shape shape = entry.at("shape").get<Shape>();
        auto t = detail::read_tensor<Real>(is, std::move(shape));
        if (kind == "param")
            ck.params.emplace_back(name, std::move(t));
        else if (kind == "adam_m")
            ck.adam_m.push_back(std::move(t));
        else if (kind == "adam_v")
            ck.adam_v.push_back(std::move(t));
        else
            throw data_error(str_cat("load_checkpoint: unknown tensor kind ", kind));
    }
    return ck;
}

template <typename Real>
Checkpoint<Real> checkpoint_from_model(const Model<Real>& m, std::int64_t epoch = 0,
                                       const Adam<Real>* adam = nullptr, const Rng* rng = nullptr) {
    Checkpoint<Real> ck;
    ck.config = m.config;
    ck.epoch = epoch;
    for (const auto& [name, var] : m.params.items()) ck.params.emplace_back(name, var->value);
    if (adam) {
        ck.adam_t = adam->t();
        ck.adam_m = adam->m();
        ck.adam_v = adam->v();
    }
    if (rng) ck.rng_state = rng->serialize();
    return ck;
}

// Rebuilds the model from the stored config and overwrites its parameters by
// name. The stored table must cover the parameter set exactly.
template <typename Real>
Model<Real> model_from_checkpoint(const Checkpoint<Real>& ck) {
    Model<Real> m = build<Real>(ck.config);
    if (ck.params.size() != m.params.size())
        throw data_error(str_cat("model_from_checkpoint: ", ck.params.size(), " stored tensors vs ",
                                 m.params.size(), " model parameters"));
    for (const auto& [name, t] : ck.params) {
        if (!m.params.has(name)) throw data_error(str_cat("model_from_checkpoint: unknown parameter ", name));
        auto var = m.params.at(name);
        if (!var->value.same_shape(t))
            throw data_error(str_cat("model_from_checkpoint: shape mismatch for ", name, ": stored ",
                                     shape_str(t.shape()), " vs built ", shape_str(var->value.shape())));
        var->value = t;
    }
    return m;
}

}  // namespace hva
