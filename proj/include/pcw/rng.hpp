#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace pcw {

// Independent, reproducible seed for (base, stream, index) via splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Uniform integer in [0, n) by rejection. Unlike std::uniform_int_distribution
// the result does not depend on the standard library implementation.
std::size_t uniform_below(std::mt19937_64& rng, std::size_t n);

// `count` distinct indices from [0, population) in random order (partial
// Fisher-Yates).
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t seed);

}  // namespace pcw
