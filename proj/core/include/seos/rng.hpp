#pragma once

#include "seos/types.hpp"

#include <cstdint>
#include <random>

namespace seos {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream for (root, stream) pairs; used for per-cell and per-seed RNGs.
Rng make_stream(std::uint64_t root, std::uint64_t stream);

// Entries filled in column-major order.
Vector gaussian_vector(Index n, Rng& rng, double stddev = 1.0);
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0);

}  // namespace seos
