#pragma once

#include <cmath>
#include <cstdint>

namespace svb {

// Seedable 64-bit generator with a splitmix state advance. Every stream the
// trainer consumes (synthetic data, sample draws) derives from this so runs
// are reproducible across platforms and implementations.
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n); multiply-high mapping, bias < n / 2^64.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via the polar Box-Muller transform (log and sqrt only,
    // no trig). Consumes a variable number of uniforms; the second deviate is
    // discarded to keep the generator stateless beyond its 64-bit counter.
    double next_normal() {
        for (;;) {
            double a = 2.0 * next_double() - 1.0;
            double b = 2.0 * next_double() - 1.0;
            double s = a * a + b * b;
            if (s > 0.0 && s < 1.0) {
                return a * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

private:
    std::uint64_t state_;
};

// Decorrelated sub-seed for a given role (worker id, stream kind, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role) {
    SplitMix64 mix(seed ^ (0xA0761D6478BD642Full * (role + 1)));
    return mix.next_u64();
}

}  // namespace svb
