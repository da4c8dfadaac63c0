#pragma once

#include "poisonlab/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace poisonlab {

// Deterministic randomness. All stochastic operations in the lab derive their
// streams from a user seed through splitmix64, and all distributions are
// generated with explicit arithmetic on raw mt19937_64 draws. This keeps
// trajectory generation and dataset files bit-identical across standard
// library implementations, not just across runs.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mixes a base seed with a stream id so that sub-seeds for independent
/// stages (dataset, attack, evaluation, ...) never collide.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ (0x6a09e667f3bcc909ULL + stream)) + index);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    Index uniform_index(Index n) {
        if (n < 1) throw ArgumentError("uniform_index: n must be >= 1");
        const auto un = static_cast<std::uint64_t>(n);
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<Index>(x % un);
    }

    /// Standard normal via Box-Muller. Two fresh draws per call; no cached
    /// spare, so the consumed stream length is position-independent.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// k distinct indices from [0, n), in selection order (partial Fisher-Yates).
    std::vector<Index> sample_without_replacement(Index n, Index k) {
        if (n < 0 || k < 0 || k > n)
            throw ArgumentError("sample_without_replacement: need 0 <= k <= n");
        std::vector<Index> pool(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<Index> out;
        out.reserve(static_cast<std::size_t>(k));
        for (Index i = 0; i < k; ++i) {
            const Index j = i + uniform_index(n - i);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return out;
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace poisonlab
