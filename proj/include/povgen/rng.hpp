#pragma once
// SplitMix64: the project's portable RNG. Every sampled stream must replay
// identically across platforms and implementations, which rules out
// std::mt19937's unspecified seeding helpers and anything locale/library
// dependent. Algorithm: Steele/Lea/Flood, public domain.

#include <cstdint>
#include <string_view>

namespace povgen {

class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound); bound == 0 means the full 64-bit range.
    std::uint64_t next_below(std::uint64_t bound) {
        std::uint64_t v = next();
        return bound == 0 ? v : v % bound;
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Deterministic seed derivation for independent sub-streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    SplitMix64 m(a ^ (b * 0x9E3779B97F4A7C15ULL) ^ (c * 0xC2B2AE3D27D4EB4FULL));
    m.next();
    return m.next();
}

}  // namespace povgen
