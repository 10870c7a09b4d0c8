// Copyright 2026 The qmlkit developers

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file
 * Deterministic random number generation and seed derivation.
 *
 * All stochastic paths in qmlkit draw from the xoshiro256** generator below,
 * seeded through splitmix64. Per-job seeds are derived from a base seed and a
 * job index path, so independent jobs can run in any order (or in parallel)
 * and still produce bit-identical results.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>

namespace qmlkit {

/// splitmix64 step; also used as the finalizing mixer in seed derivation.
inline std::uint64_t splitmix64(std::uint64_t &state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/**
 * @brief xoshiro256** pseudo-random generator.
 *
 * Small, fast and fully specified, so results are reproducible across
 * platforms and compilers (contrary to `std::discrete_distribution` and
 * friends, whose output is implementation-defined).
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto &word : state_) {
            word = splitmix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Standard normal via Box-Muller (uses two uniforms per pair).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) {
            u1 = next_double();
        }
        const double u2 = next_double();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = mag * std::sin(two_pi * u2);
        have_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection-free modulo is fine here; bias is < 2^-53 for desk-scale n.
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n));
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/**
 * @brief Derive a per-job seed from a base seed and a job index path.
 *
 * Distinct paths map to distinct seeds except for 64-bit hash collisions
 * (probability < 2^-64 per pair).
 */
inline std::uint64_t derive_seed(std::uint64_t base_seed,
                                 std::span<const std::uint64_t> path) {
    std::uint64_t h = base_seed ^ 0x6a09e667f3bcc908ULL;
    for (const std::uint64_t v : path) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        std::uint64_t tmp = h;
        h = splitmix64(tmp);
    }
    std::uint64_t tmp = h;
    return splitmix64(tmp);
}

inline std::uint64_t derive_seed(std::uint64_t base_seed,
                                 std::initializer_list<std::uint64_t> path) {
    return derive_seed(base_seed, std::span<const std::uint64_t>(path.begin(), path.size()));
}

/// FNV-1a 64-bit hash; used for cache checksums and log ids.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace qmlkit
