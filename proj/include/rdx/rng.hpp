#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace rdx {

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Standard normal quantile (Wichura's AS241, double precision).
double normal_quantile(double p);

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic counter-free PRNG (xoshiro256**) with named-substream
/// seeding. Every consumer derives its own stream from the master seed
/// plus integer labels, so datasets are pure functions of (config, seed)
/// regardless of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }
    Rng(std::uint64_t master, std::initializer_list<std::uint64_t> stream) {
        std::uint64_t s = master;
        for (std::uint64_t id : stream) {
            s ^= 0x9e3779b97f4a7c15ULL + id + (s << 6) + (s >> 2);
            (void)detail::splitmix64(s);
        }
        reseed(s);
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

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// N(mean, sd^2) via inverse-CDF; exactly reproducible across platforms.
    double normal(double mean = 0.0, double sd = 1.0) {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return mean + sd * normal_quantile(u);
    }

    /// Gumbel(0, scale), i.e. Type-I extreme value.
    double gumbel(double scale) {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return -scale * std::log(-std::log(u));
    }

    /// Binomial(n, p) by Bernoulli summation; n in this codebase is small.
    long binomial(long n, double p) {
        if (p <= 0.0 || n <= 0) return 0;
        if (p >= 1.0) return n;
        long c = 0;
        for (long i = 0; i < n; ++i) c += (uniform() < p) ? 1 : 0;
        return c;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    void reseed(std::uint64_t seed) {
        for (auto& w : s_) w = detail::splitmix64(seed);
    }
    std::uint64_t s_[4];
};

}  // namespace rdx
