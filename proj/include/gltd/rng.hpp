#pragma once

#include <cmath>
#include <cstdint>

#include "gltd/common.hpp"

namespace gltd {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ seeded through SplitMix64. Fully defined here so streams are
// bit-identical on every platform; std distributions are never used.
//
// Stream splitting: child(i) derives an independent generator from the seed
// this generator was constructed with, not from its current state, so the
// layout of child streams does not depend on how much the parent has been
// consumed. Rule: child_seed = mix(root_seed, i) via SplitMix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : root_seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = detail::splitmix64(sm);
    }

    std::uint64_t root_seed() const { return root_seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        check(n > 0, "Rng::uniform_int: n must be positive");
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller on two fresh uniforms; u clamped away from 0.
        double u = uniform();
        if (u < 0x1.0p-53) u = 0x1.0p-53;
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Rng child(std::uint64_t stream_id) const {
        std::uint64_t sm = root_seed_ ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1));
        return Rng(detail::splitmix64(sm));
    }

    // Named sub-stream, e.g. child_named("shuffle", epoch).
    Rng child_named(const char* tag, std::uint64_t index) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over the tag
        for (const char* p = tag; *p; ++p) h = (h ^ static_cast<unsigned char>(*p)) * 0x100000001B3ULL;
        return child(h ^ (index * 0xD1B54A32D192ED03ULL + 1));
    }

private:
    std::uint64_t root_seed_;
    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gltd
