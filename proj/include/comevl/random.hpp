#pragma once

// Portable seeded randomness. Standard-library distributions are
// implementation-defined, so everything the library generates goes through
// these splitmix64-based helpers to keep outputs identical across toolchains.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "comevl/tensor.hpp"

namespace comevl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Hash of an ordered key tuple, e.g. (seed, layer, token, channel).
inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = 0x243F6A8885A308D3ull;
    for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
    return h;
}

/// Uniform in [0, 1) from 53 high bits.
inline constexpr double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based draws: every value depends only on its key.
struct CounterRng {
    std::uint64_t seed = 0;

    double uniform(std::initializer_list<std::uint64_t> key) const {
        std::uint64_t h = splitmix64(seed);
        for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
        return unit_double(h);
    }

    double normal(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d = 0) const {
        const double u1 = uniform({a, b, c, d, 1});
        const double u2 = uniform({a, b, c, d, 2});
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

/// Sequential stream for tests and parameter initialization.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xD1B54A32D192ED03ull)) {}

    std::uint64_t next() { return splitmix64(state_++); }
    double uniform() { return unit_double(next()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    double normal() {
        const double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    Tensor normal_tensor(Shape shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data()) v = stddev * normal();
        return t;
    }

private:
    std::uint64_t state_;
};

}  // namespace comevl
