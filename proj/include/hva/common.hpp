#pragma once

#include <cmath>
#include <cstdint>
#include <new>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hva {

// Raised when on-disk inputs are missing, malformed, or inconsistent.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a computation produced non-finite values (divergence, bad scaling).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename... Args>
std::string str_cat(Args&&... args) {
    std::ostringstream oss;
    (oss << ... << args);
    return oss.str();
}

template <typename... Args>
[[noreturn]] void fail_shape(Args&&... args) {
    throw std::invalid_argument(str_cat(std::forward<Args>(args)...));
}

// 64-byte aligned storage. With a fixed alignment, equally sized buffers take
// the same vectorized code paths, so reductions stay bit-reproducible across
// allocations; ordinary heap alignment varies and perturbs results in the ulps.
template <typename T>
struct aligned_allocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    aligned_allocator() = default;
    template <typename U>
    aligned_allocator(const aligned_allocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const aligned_allocator<U>&) const noexcept {
        return true;
    }
};

// Deterministic RNG. Wraps mt19937_64 but pins the uniform/normal mapping in
// this header so streams do not depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() { return state_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(state_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (no caching, two draws per call)
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // multiply-shift; bias is negligible for the sizes used here
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    std::string serialize() const {
        std::ostringstream oss;
        oss << state_;
        return oss.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream iss(s);
        iss >> state_;
        if (iss.fail()) throw data_error("Rng::deserialize: malformed state string");
    }

private:
    std::mt19937_64 state_;
};

}  // namespace hva
