#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace msis {

// splitmix64 finalizer (Vigna / Steele et al.), used to hash replica indices
// into well-separated stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica_index) {
    return seed ^ splitmix64(replica_index);
}

// Seeded generator with a version-stable sequence. The engine is mt19937_64
// (fully specified by the C++ standard) and every variate below is derived
// from raw 64-bit draws only, never from std:: distributions whose mapping
// is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng for_replica(std::uint64_t seed, std::uint64_t replica_index) {
        return Rng(replica_seed(seed, replica_index));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0,1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0,1); redraws the (probability 2^-53) exact zero so
    // exponential waiting times are strictly positive.
    double uniform01_open() {
        double u;
        do {
            u = uniform01();
        } while (u == 0.0);
        return u;
    }

    // Inverse-CDF exponential: -ln(1-u)/rate.
    double exponential(double rate) {
        return -std::log1p(-uniform01_open()) / rate;
    }

    // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        using u128 = unsigned __int128;
        std::uint64_t x = engine_();
        u128 m = static_cast<u128>(x) * static_cast<u128>(n);
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t threshold = -n % n;
            while (lo < threshold) {
                x = engine_();
                m = static_cast<u128>(x) * static_cast<u128>(n);
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace msis
