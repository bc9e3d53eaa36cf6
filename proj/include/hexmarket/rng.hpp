#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hexmarket/common.hpp"

namespace hexmarket {

// Seedable generator with hand-rolled distributions. std::mt19937_64 is
// bit-exact across implementations; the standard distributions are not,
// so every distribution used by the simulator lives here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw DomainError("uniform_int: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller (cosine branch, no caching: one call consumes two uniforms).
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Knuth's product method; exact for lambda below the exp underflow bound.
    // Larger rates are split using Poisson additivity.
    long poisson(double lambda) {
        if (lambda < 0.0 || !std::isfinite(lambda)) throw DomainError("poisson: rate must be finite and nonnegative");
        if (lambda == 0.0) return 0;
        long total = 0;
        while (lambda > 500.0) {
            total += poisson_knuth(500.0);
            lambda -= 500.0;
        }
        return total + poisson_knuth(lambda);
    }

    // Sample an index from cumulative weights (last element = total mass).
    std::size_t categorical(const std::vector<double>& cumulative) {
        if (cumulative.empty()) throw DomainError("categorical: empty weight table");
        const double u = uniform01() * cumulative.back();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cumulative[mid] <= u)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }

    // Derive an independent stream (fixed SplitMix64 mix of seed and tag).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    long poisson_knuth(double lambda) {
        const double cutoff = std::exp(-lambda);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > cutoff);
        return k - 1;
    }

    std::mt19937_64 engine_;
};

}  // namespace hexmarket
