#pragma once

#include <cstdint>
#include <random>

namespace fedst {

using Rng = std::mt19937_64;

/// Uniform draw in the open interval (0, 1). Hand-rolled from raw bits so
/// sequences do not depend on standard-library distribution internals.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

/// Uniform draw in [lo, hi).
inline double uniformRange(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace fedst
