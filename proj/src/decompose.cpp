#include "fedst/decompose.hpp"

namespace fedst {

DecomposedWindow decompose(const Vector& x, Index window) {
  const Index n = x.size();
  if (window < 1 || window % 2 == 0) {
    throw ConfigError("decompose: window must be odd and positive, got " +
                      std::to_string(window));
  }
  if (window > n) {
    throw ConfigError("decompose: window " + std::to_string(window) +
                      " exceeds series length " + std::to_string(n));
  }

  DecomposedWindow out;
  out.window = window;
  out.trend.resize(n);
  const Index half = window / 2;
  for (Index t = 0; t < n; ++t) {
    double acc = 0.0;
    for (Index k = t - half; k <= t + half; ++k) {
      const Index idx = k < 0 ? 0 : (k >= n ? n - 1 : k);  // replicate padding
      acc += x[idx];
    }
    out.trend[t] = acc / static_cast<double>(window);
  }
  out.seasonal = x - out.trend;
  return out;
}

}  // namespace fedst
