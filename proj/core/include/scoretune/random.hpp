#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "scoretune/linalg.hpp"

namespace scoretune {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// (base seed, counter) pair: stream k of seed s is seeded with
/// splitmix64(s ^ splitmix64(k + 0x9e3779b97f4a7c15)).
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of the k-th derived stream (chain k, worker k, ...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

/// Fills `out` with i.i.d. standard normals drawn from `rng` in memory order
/// (row by row for Matrix).
void fill_standard_normal(Rng& rng, std::span<double> out);
void fill_standard_normal(Rng& rng, Matrix& out);
void fill_standard_normal(Rng& rng, Vector& out);

}  // namespace scoretune
