#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tra {

// Deterministic RNG with named sub-streams. Every consumer (init, sampler,
// flip, folds) derives its own stream from the master seed, so adding or
// reordering one consumer does not shift the draws of another.
//
// All distributions are hand-rolled on top of mt19937_64: the standard
// engine is bit-portable, the standard <random> distributions are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix(seed)) {}

    static std::uint64_t mix(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
        std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
        for (char c : name) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ull;
        }
        h ^= index + 0x9e3779b97f4a7c15ull;
        return splitmix(h);
    }

    static Rng stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
        return Rng(mix(master, name, index));
    }

    std::uint64_t next_u64() { return eng_(); }

    // [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased draw from [0,n).
    std::int64_t uniform_int(std::int64_t n) {
        const auto un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; spare value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <class It>
    void shuffle(It first, It last) {
        const std::int64_t n = last - first;
        for (std::int64_t i = n - 1; i > 0; --i) {
            std::swap(first[i], first[uniform_int(i + 1)]);
        }
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace tra
