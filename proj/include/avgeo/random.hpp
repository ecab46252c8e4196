#pragma once

#include <cstdint>
#include <random>

namespace avgeo {

/// All randomized operations take this engine explicitly.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

} // namespace avgeo
