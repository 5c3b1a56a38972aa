#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "hva/common.hpp"

namespace hva {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor (last axis fastest).
template <typename Real>
class Tensor {
public:
    using Storage = std::vector<Real, aligned_allocator<Real>>;

    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), Real(0)) {
        for (auto d : shape_)
            if (d < 1) fail_shape("Tensor: every extent must be >= 1, got ", shape_str(shape_));
    }

    Tensor(Shape shape, const std::vector<Real>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            fail_shape("Tensor: data size ", data_.size(), " does not match shape ", shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, Real v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(Real v) { return full({1}, v); }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }

    Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const Real& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Row-major offset helpers for the common ranks in this library.
    std::int64_t offset2(std::int64_t i, std::int64_t j) const { return i * shape_[1] + j; }
    std::int64_t offset3(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return (i * shape_[1] + j) * shape_[2] + k;
    }
    std::int64_t offset4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
        return ((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
    }
    std::int64_t offset5(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d, std::int64_t e) const {
        return (((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d) * shape_[4] + e;
    }

    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            fail_shape("Tensor::reshaped: numel mismatch ", shape_str(shape_), " -> ", shape_str(new_shape));
        Tensor out = *this;
        out.shape_ = std::move(new_shape);
        return out;
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const Real& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename OtherReal>
    Tensor<OtherReal> cast() const {
        Tensor<OtherReal> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<OtherReal>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    Shape shape_;
    Storage data_;
};

template <typename Real>
Tensor<Real> random_normal(Shape shape, Rng& rng, Real stddev = Real(1), Real mean = Real(0)) {
    Tensor<Real> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<Real>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
    return t;
}

template <typename Real>
Tensor<Real> random_uniform(Shape shape, Rng& rng, Real lo = Real(0), Real hi = Real(1)) {
    Tensor<Real> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<Real>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
}

template <typename Real>
double max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (!a.same_shape(b)) fail_shape("max_abs_diff: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace hva
