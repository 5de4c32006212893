#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace a2net {

/// Derives an independent stream seed from a base seed and a salt.
/// Chain calls to bind more context: mix_seed(mix_seed(master, epoch), purpose).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t s = base + 0x9E3779B97F4A7C15ull * (salt + 1);
    s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ull;
    s = (s ^ (s >> 27)) * 0x94D049BB133111EBull;
    return s ^ (s >> 31);
}

/// Deterministic random stream. Draws go through our own uniform/gaussian
/// transforms because the std distributions are implementation-defined and
/// would break reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi), rejection-sampled so every value is
    /// equally likely.
    long uniform_int(long lo, long hi) {
        if (hi <= lo) {
            throw std::invalid_argument("uniform_int: empty range");
        }
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo);
        const std::uint64_t reject_below = (0ull - range) % range;
        std::uint64_t r = next_u64();
        while (r < reject_below) r = next_u64();
        return lo + static_cast<long>(r % range);
    }

    /// Standard normal via Box-Muller. The sine mate is discarded so one
    /// call always consumes exactly two uniforms.
    double gaussian() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(0, i + 1))]);
        }
    }

    /// k distinct values from [0, n), in draw order.
    std::vector<long> sample_without_replacement(long n, long k) {
        if (k < 0 || k > n) {
            throw std::invalid_argument("sample_without_replacement: k outside [0, n]");
        }
        std::vector<long> pool(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<long> out;
        out.reserve(static_cast<std::size_t>(k));
        for (long i = 0; i < k; ++i) {
            const long j = uniform_int(i, n);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return out;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace a2net
