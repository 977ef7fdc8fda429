#pragma once

#include <cstdint>

namespace flowactor {

// splitmix64-seeded xoshiro256**. Self-contained so streams are identical
// across standard libraries; every randomized component takes one of these
// with an explicit seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            s = z ^ (z >> 31);
        }
    }

    std::uint64_t u64() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return u64() % n; }

    // Uniform in [lo, hi] inclusive.
    std::uint64_t range(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

    // True with probability p.
    bool chance(double p) {
        if (p <= 0) return false;
        if (p >= 1) return true;
        return static_cast<double>(u64() >> 11) * 0x1.0p-53 < p;
    }

    // Derives an independent stream, e.g. one per flow or per link.
    Rng fork(std::uint64_t salt) { return Rng(u64() ^ (salt * 0x9e3779b97f4a7c15ull)); }

private:
    std::uint64_t state_[4];
};

}  // namespace flowactor
