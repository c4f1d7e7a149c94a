#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace imbgan {

using Rng = std::mt19937_64;

// Independent stream keyed by (seed, keys...), e.g. make_rng(seed, {epoch}).
inline Rng make_rng(std::uint64_t seed,
                    std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> material;
  material.push_back(static_cast<std::uint32_t>(seed));
  material.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto k : keys) {
    material.push_back(static_cast<std::uint32_t>(k));
    material.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(material.begin(), material.end());
  return Rng(seq);
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace imbgan
