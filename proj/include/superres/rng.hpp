#pragma once

// Seedable, portable random numbers. std::mt19937_64 produces a
// standard-specified stream, but the std:: distributions do not, so every
// sampler used for published numbers is written out here.

#include <cmath>
#include <cstdint>
#include <random>

#include "superres/errors.hpp"

namespace superres {

// Finalizer of the splitmix64 generator; good 64-bit mixing for seed derivation.
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Documented stream-splitting rule: member i of an ensemble seeded with
// `base` uses splitmix64_mix(base ^ (golden * (i + 1))).
inline std::uint64_t derive_stream_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64_mix(base ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Poisson by Knuth's product method. Sums of independent Poissons are
    // Poisson, so large means are split exactly instead of approximated.
    std::uint64_t poisson(double mean) {
        if (!(mean >= 0.0)) throw DomainError("poisson: mean must be >= 0");
        std::uint64_t total = 0;
        while (mean > 32.0) {
            total += poisson_knuth(32.0);
            mean -= 32.0;
        }
        return total + poisson_knuth(mean);
    }

    // Bose-Einstein (geometric on {0,1,2,...}) with the given mean, via
    // inverse transform: P(n >= k) = q^k with q = mean / (1 + mean).
    std::uint64_t bose_einstein(double mean) {
        if (!(mean >= 0.0)) throw DomainError("bose_einstein: mean must be >= 0");
        if (mean == 0.0) return 0;
        const double q = mean / (1.0 + mean);
        const double u = uniform_pos();
        const double n = std::floor(std::log(u) / std::log(q));
        return n < 0.0 ? 0 : static_cast<std::uint64_t>(n);
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::uint64_t poisson_knuth(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            p *= uniform_pos();
            ++k;
        } while (p > limit);
        return k - 1;
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace superres
