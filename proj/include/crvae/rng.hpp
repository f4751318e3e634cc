#pragma once

// Deterministic random source. All stochastic behaviour in the project flows
// through this class so that a run is reproducible from a single seed. The
// uniform and normal transforms are written out explicitly (rather than using
// std::uniform_real_distribution / std::normal_distribution) because the
// standard distributions are not bit-identical across library implementations.

#include <cmath>
#include <cstdint>
#include <random>

#include "crvae/tensor.hpp"

namespace crvae {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    // Independent sub-stream: same (construction seed, tag) always yields the
    // same stream, regardless of how much this stream has been consumed.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t s = seed_ ^ (tag * 0x9e3779b97f4a7c15ull);
        std::uint64_t a = splitmix64(s);
        std::uint64_t b = splitmix64(s);
        return Rng(a ^ (b << 1) ^ tag);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1) with 53 significant bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::int64_t below(std::int64_t n) {
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

    // Standard normal via Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    Tensor<T> normal_tensor(Shape s) {
        Tensor<T> out(std::move(s));
        for (auto& v : out.data) v = static_cast<T>(normal());
        return out;
    }

    template <typename T>
    Tensor<T> uniform_tensor(Shape s, double lo, double hi) {
        Tensor<T> out(std::move(s));
        for (auto& v : out.data) v = static_cast<T>(uniform(lo, hi));
        return out;
    }

    // Fisher-Yates shuffle with this stream.
    template <typename V>
    void shuffle(V& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            std::int64_t j = below(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace crvae
