#pragma once

#include <cmath>
#include <cstdint>

#include "hbjm/errors.hpp"

namespace hbjm {

/// SplitMix64 step, used for seed expansion and key mixing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** generator with explicit substream derivation.
///
/// Substreams are keyed by up to three integers on top of the run seed, so
/// that work distributed across threads draws from generators that do not
/// depend on scheduling order. Distribution sampling is implemented inline
/// (rather than via <random>) because the standard library distributions are
/// not bit-reproducible across implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { seed_from(seed); }

    /// Derives a generator for the (a, b, c) substream of `seed`.
    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0) {
        std::uint64_t h = seed;
        h = splitmix64(h) ^ a;
        h = splitmix64(h) ^ b;
        h = splitmix64(h) ^ c;
        return Rng(splitmix64(h));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform draw strictly inside (0, 1); safe as an argument to log().
    double uniform() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Uniform draw on (lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Uses two uniforms per draw and keeps
    /// no cached spare, so the call sequence alone determines the stream.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Exponential with the given rate (mean 1/rate).
    double exponential(double rate) {
        if (!(rate > 0.0)) throw contract_violation("exponential rate must be positive");
        return -std::log(uniform()) / rate;
    }

    /// Gamma draw in the shape-rate convention (mean shape/rate), using the
    /// Marsaglia-Tsang squeeze with the shape<1 boosting step.
    double gamma(double shape, double rate) {
        if (!(shape > 0.0) || !(rate > 0.0))
            throw contract_violation("gamma shape and rate must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    /// Inverse-gamma draw in the convention with mean b / (a - 1) for a > 1.
    double inverse_gamma(double a, double b) { return b / gamma(a, 1.0); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw contract_violation("below(0)");
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    void seed_from(std::uint64_t seed) {
        std::uint64_t sm = seed;
        bool any = false;
        for (auto& s : s_) {
            s = splitmix64(sm);
            any = any || s != 0;
        }
        if (!any) s_[0] = 1;
    }

    std::uint64_t s_[4];
};

} // namespace hbjm
