#ifndef REJSAMP_RNG_HPP
#define REJSAMP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace rejsamp {

namespace detail {
// splitmix64; used to whiten seeds and derive child streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Seeded random stream. Distributions are implemented on top of the raw
/// mt19937_64 output rather than <random> distribution objects, so a fixed
/// seed reproduces the identical sequence on every standard library.
///
/// Child streams derived via derive() are statistically independent, which is
/// the seed-isolation contract the replication engine relies on: replicate k
/// always uses derive(base_seed, k) regardless of execution order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(whiten(seed)) {}

    /// Independent child stream for (this seed, key).
    static RandomStream derive(std::uint64_t base_seed, std::uint64_t key) {
        std::uint64_t s = base_seed;
        std::uint64_t a = detail::splitmix64(s);
        s = a ^ (0x9e3779b97f4a7c15ULL + key);
        std::uint64_t b = detail::splitmix64(s);
        return RandomStream(b);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1); never returns 0.
    double uniform_pos() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire-style rejection to remove modulo bias.
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        std::uint64_t lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = engine_();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Marsaglia polar, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Chi-square with integer dof, as a sum of squared normals.
    double chisq(int dof) {
        double s = 0.0;
        for (int k = 0; k < dof; ++k) {
            double z = normal();
            s += z * z;
        }
        return s;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static std::uint64_t whiten(std::uint64_t seed) {
        std::uint64_t s = seed;
        return detail::splitmix64(s);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rejsamp

#endif
