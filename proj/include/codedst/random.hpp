// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded sampling helpers whose output does not depend on the standard
// library's distribution implementations.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace codedst {

/// Uniform integer in [0, bound) by rejection; bound > 0.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % bound;
}

/// `count` distinct indices from [0, population), uniformly, in draw order.
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> pool(population);
  for (std::size_t i = 0; i < population; ++i) pool[i] = i;
  if (count > population) count = population;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_below(rng, population - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

/// 64-bit FNV-1a; stable across platforms, used to derive per-item seeds.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t hash = basis;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace codedst
