#pragma once

// Seed derivation for reproducible, independently seeded random streams.

#include "estim/core.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace estim {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hashes a master seed and a path of stream coordinates into a child seed.
/// Distinct coordinate paths give statistically independent streams.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(master ^ 0x6a09e667f3bcc908ULL);
    for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x3c6ef372fe94f82bULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
}

// Stream tags.
inline constexpr std::uint64_t kTrajectoryStream = 1;
inline constexpr std::uint64_t kGibbsStream = 2;

inline Vector standard_normal(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal;
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
}

/// One draw from N(mean, L L^T) given the lower factor L.
inline Vector sample_gaussian(const Vector& mean, const Matrix& lower, Rng& rng) {
    return mean + lower * standard_normal(mean.size(), rng);
}

}  // namespace estim
