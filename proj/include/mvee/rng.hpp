#pragma once

#include <cstdint>

namespace mvee {

// splitmix64: the de-facto standard 64-bit finalizer/stream generator.
// All randomness in the project flows through this so that runs are
// bit-reproducible across platforms (std:: distributions are not).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
}

class SmallRng {
public:
    SmallRng() = default;
    explicit SmallRng(std::uint64_t seed) : state_(mix64(seed ^ 0xD1B54A32D192ED03ull)) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    // Unbiased-enough bounded draw via 128-bit multiply (Lemire reduction
    // without the rejection loop; bias is < 2^-32 for our bounds).
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    bool chance_one_in(std::uint64_t n) { return below(n) == 0; }

private:
    std::uint64_t state_ = 0x853C49E6748FEA9Bull;
};

// 4-round balanced Feistel permutation over 20-bit values (10|10 halves).
// Bijective for every key, which is what makes the diversified address
// mapping injective without knowing the variable count up front.
inline std::uint32_t feistel20(std::uint32_t x, std::uint64_t key) {
    std::uint32_t left = (x >> 10) & 0x3FF;
    std::uint32_t right = x & 0x3FF;
    for (int round = 0; round < 4; ++round) {
        std::uint64_t f = mix64(right ^ key ^ (static_cast<std::uint64_t>(round) << 56));
        std::uint32_t next_right = left ^ static_cast<std::uint32_t>(f & 0x3FF);
        left = right;
        right = next_right;
    }
    return (left << 10) | right;
}

}  // namespace mvee
