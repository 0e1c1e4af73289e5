#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rrda {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stage label,
/// so that each pipeline stage is reproducible on its own.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

inline Rng make_rng(std::uint64_t base, std::string_view label) {
  return Rng(derive_seed(base, label));
}

}  // namespace rrda
