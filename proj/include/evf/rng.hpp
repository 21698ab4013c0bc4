#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace evf {

/// splitmix64 finalizer; used to derive child seeds from a master seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

/// Seed domain separation by label, so e.g. noise and track streams derived
/// from the same master seed never collide.
inline uint64_t mix_seed(uint64_t a, std::string_view label, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix_seed(a ^ h, index);
}

/// Deterministic RNG. mt19937_64 output is fully specified by the standard;
/// all distributions are hand-rolled here because std:: distribution results
/// are implementation-defined and would break reproducibility contracts.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [0, n). Rejection sampling, unbiased.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

    uint64_t range_u64(uint64_t lo, uint64_t hi) { return lo + below(hi - lo + 1); }

    /// Standard normal via Box-Muller (one spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = unit(), u2 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Poisson count, Knuth's method. Fine for the small per-step means used
    /// by the generators; splits large means to keep exp() in range.
    uint64_t poisson(double mean) {
        uint64_t total = 0;
        while (mean > 30.0) {
            total += poisson_small(30.0);
            mean -= 30.0;
        }
        return total + poisson_small(mean);
    }

    bool coin() { return (gen_() & 1u) != 0; }

private:
    uint64_t poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= unit();
        } while (p > limit);
        return k - 1;
    }

    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace evf
