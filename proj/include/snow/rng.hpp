#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace snow {

// 64-bit FNV-1a, used to derive substream seeds from labels.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic PCG32 stream. We avoid <random> distributions because their
/// exact output is implementation-defined; every sampler below is spelled out
/// so runs are reproducible bit-for-bit.
class RngStream {
public:
    RngStream() : RngStream(0xdeadbeefcafef00dull, 0xda3e39cb94b95bdbull) {}

    RngStream(std::uint64_t seed, std::uint64_t stream) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        return (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return next_double() < p;
    }

    /// Standard normal via Box-Muller (one value per call, second discarded
    /// to keep draw counts position-independent).
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Normal truncated at zero (negative samples clamp to 0).
    double normal_nonneg(double mean, double stddev) {
        double v = normal(mean, stddev);
        return v < 0.0 ? 0.0 : v;
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

/// Derives independent named substreams from one master seed. Each
/// (entity, purpose) label gets its own stream so adding instrumentation or
/// reordering unrelated draws never perturbs existing sequences.
class RngRegistry {
public:
    explicit RngRegistry(std::uint64_t master_seed) : master_(master_seed) {}

    RngStream stream(std::string_view label) const {
        std::uint64_t s = master_ ^ fnv1a64(label);
        std::uint64_t seq = splitmix64(s);
        std::uint64_t seed = splitmix64(s);
        return RngStream(seed, seq);
    }

    std::uint64_t master_seed() const { return master_; }

private:
    std::uint64_t master_;
};

}  // namespace snow
