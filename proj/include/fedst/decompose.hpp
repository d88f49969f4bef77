#pragma once

#include "fedst/error.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Moving-average split of a series. trend + seasonal reconstructs the input
/// exactly (seasonal is computed as the residual).
struct DecomposedWindow {
  Vector trend;
  Vector seasonal;
  Index window = 0;
};

/// Centered moving average of odd width `window` with replicate edge padding;
/// seasonal = x − trend. Window must be odd and in [1, len(x)].
DecomposedWindow decompose(const Vector& x, Index window);

}  // namespace fedst
