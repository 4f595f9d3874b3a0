#pragma once

#include <cstdint>
#include <cmath>

namespace adaptaug {

// Deterministic random stream. All stochastic code in the library draws
// from one of these; streams are forked by (tag, index) so that adding a
// consumer in one place never shifts the draws seen by another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // splitmix-style warmup so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [0, n). Lemire multiply-shift; bias-free enough
    /// for any n this project uses.
    std::uint64_t uniform_index(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(uniform_index(
                        static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// Derive an independent child stream. Forks with distinct (tag, index)
    /// are decorrelated from each other and from the parent.
    Rng fork(std::uint64_t tag, std::uint64_t index = 0) const {
        std::uint64_t s = state_;
        s = mix(s ^ (0xA0761D6478BD642FULL + tag));
        s = mix(s ^ (0xE7037ED1A0B428DBULL + index));
        return Rng(s);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// Stream tags used when forking off the run's master seed.
namespace rng_tag {
inline constexpr std::uint64_t synth = 1;
inline constexpr std::uint64_t data_order = 2;
inline constexpr std::uint64_t augment = 3;
inline constexpr std::uint64_t policy_init = 4;
inline constexpr std::uint64_t policy_sample = 5;
inline constexpr std::uint64_t ppo = 6;
inline constexpr std::uint64_t queue = 7;
inline constexpr std::uint64_t probe = 8;
inline constexpr std::uint64_t encoder_init = 9;
}  // namespace rng_tag

}  // namespace adaptaug
