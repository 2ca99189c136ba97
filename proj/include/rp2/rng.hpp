#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rp2 {

using Rng = std::mt19937_64;

/// Stable sub-key: the same (seed, key) always yields the same stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view key, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, key, index));
}

double uniform(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi_inclusive);

/// Counter-based standard normal: depends only on (seed, counter), never on call order.
double hashed_normal(std::uint64_t seed, std::uint64_t counter);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace rp2
