#pragma once

#include <array>
#include <cstdint>

namespace mesoed {

// Counter-based generator (Philox 4x32-10, Salmon et al. SC'11). Every draw
// is keyed by (seed | device id, replication, step, slot), so streams are
// reproducible, disjoint across devices, and independent of evaluation
// order. Inserting a device never shifts the draws of another one.

namespace rng {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Purpose tags keep draw kinds from colliding on the same (step, slot).
enum class Draw : std::uint32_t { gaussian = 0, poisson = 1, field = 2 };

/// Uniform double in [0, 1).
double uniform(std::uint64_t seed, std::uint32_t device, std::uint64_t rep,
               std::uint32_t step, Draw kind, std::uint32_t slot);

/// Standard normal via Box-Muller on one counter block.
double normal(std::uint64_t seed, std::uint32_t device, std::uint64_t rep,
              std::uint32_t step, Draw kind, std::uint32_t slot);

/// Poisson count with the given mean. Uses sequential-search inversion on a
/// single uniform; means beyond the exp underflow range are split
/// recursively over adjacent slots.
std::uint64_t poisson(double mean, std::uint64_t seed, std::uint32_t device,
                      std::uint64_t rep, std::uint32_t step, std::uint32_t slot);

} // namespace rng

} // namespace mesoed
