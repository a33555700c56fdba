#ifndef PREP_RNG_HPP
#define PREP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace prep {

// 64-bit FNV-1a. Used for stream labels and vocabulary hashes.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 14695981039346656037ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Deterministic counter-based generator (SplitMix64). The output stream for a
// given seed is part of the project contract: golden files and checkpoints
// depend on it, so the algorithm must not change.
//
// Child streams are derived from (seed, label); distinct labels give
// independent streams that never share state with the parent.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    Rng split(std::string_view label) const {
        return Rng(finalize(seed_ ^ fnv1a64(label)));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return finalize(state_);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi); degenerate interval returns lo. Always consumes
    // exactly one draw.
    double uniform(double lo, double hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform: lo > hi");
        double r = lo + next_double() * (hi - lo);
        if (r >= hi && lo < hi) r = std::nextafter(hi, lo);
        return r;
    }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Unbiased integer in [0, n) (Lemire's method with rejection).
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        uint64_t lo = static_cast<uint64_t>(m);
        if (lo < n) {
            const uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<__uint128_t>(next_u64()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t finalize(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t state_;
};

} // namespace prep

#endif
