// SPDX-License-Identifier: Apache-2.0
//
// Seedable, splittable randomness for reproducible runs. Substream seeds are
// derived by hashing (seed, stream index) with splitmix64, so adding or
// removing streams never perturbs the draws of the others.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace lostrace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) + stream);
}

// mt19937_64 behind the handful of draw types the toolkit needs. The seed is
// scrambled through splitmix64 before use so that small consecutive seeds
// still start the engine in well-separated states.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(substream_seed(seed, stream));
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() { return normal_(engine_); }

    // standard Gumbel(0, 1) draw
    double gumbel() {
        double u = uniform01();
        if (u <= 0.0)
            u = 0x1.0p-53;
        return -std::log(-std::log(u));
    }

    // uniform index in [0, n)
    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace lostrace
