#include "fedst/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "fedst/error.hpp"

namespace fedst {

AttentionMask identityMask(Index n) {
  AttentionMask m = AttentionMask::Constant(n, n, kMasked);
  m.diagonal().setOnes();
  return m;
}

AttentionMask buildStaticMask(const StaticGraph& g, double kappa) {
  if (g.n < 1) throw ConfigError("buildStaticMask: empty graph");
  if (kappa < 0.0 || kappa >= 1.0) {
    throw ConfigError("buildStaticMask: kappa must lie in [0,1), got " + std::to_string(kappa));
  }
  if (g.edges.empty()) return identityMask(g.n);

  double mean = 0.0;
  for (const auto& e : g.edges) {
    if (e.from < 0 || e.from >= g.n || e.to < 0 || e.to >= g.n) {
      throw ConfigError("buildStaticMask: edge endpoint out of range");
    }
    if (!(e.distance >= 0.0) || !std::isfinite(e.distance)) {
      throw ConfigError("buildStaticMask: edge distance must be finite and nonnegative");
    }
    mean += e.distance;
  }
  mean /= static_cast<double>(g.edges.size());
  double var = 0.0;
  for (const auto& e : g.edges) var += (e.distance - mean) * (e.distance - mean);
  var /= static_cast<double>(g.edges.size());
  double sigma = std::sqrt(var);
  if (sigma == 0.0) {
    std::cerr << "buildStaticMask: all edge distances equal, using sigma = 1\n";
    sigma = 1.0;
  }

  AttentionMask m = AttentionMask::Constant(g.n, g.n, kMasked);
  for (const auto& e : g.edges) {
    const double w = std::exp(-(e.distance * e.distance) / (sigma * sigma));
    if (w >= kappa) m(e.from, e.to) = w;
  }
  m.diagonal().setOnes();
  return m;
}

AttentionMask buildDynamicMask(const Matrix& distances, Index k) {
  const Index n = distances.rows();
  if (distances.cols() != n) {
    throw DimensionError("buildDynamicMask: distance matrix is " +
                         shapeStr(distances.rows(), distances.cols()));
  }
  if (k < 1 || k >= n) {
    throw ConfigError("buildDynamicMask: k must satisfy 1 <= k < n, got k=" + std::to_string(k) +
                      " with n=" + std::to_string(n));
  }

  AttentionMask m = AttentionMask::Constant(n, n, kMasked);
  std::vector<std::pair<double, Index>> order;
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j) {
      if (j != i) order.emplace_back(distances(i, j), j);
    }
    // Ties at the k-th distance break toward the lower node index.
    std::sort(order.begin(), order.end());

    double dmin = order.front().first;
    double dmax = order.front().first;
    for (Index s = 0; s < k; ++s) {
      dmin = std::min(dmin, order[static_cast<std::size_t>(s)].first);
      dmax = std::max(dmax, order[static_cast<std::size_t>(s)].first);
    }
    const double range = dmax - dmin + 1e-12;
    for (Index s = 0; s < k; ++s) {
      const auto& [d, j] = order[static_cast<std::size_t>(s)];
      m(i, j) = -(d - dmin) / range;
    }
    m(i, i) = 0.0;
  }
  validateMask(m);
  return m;
}

void validateMask(const AttentionMask& mask) {
  if (mask.rows() != mask.cols()) {
    throw DimensionError("validateMask: mask is " + shapeStr(mask.rows(), mask.cols()));
  }
  for (Index i = 0; i < mask.rows(); ++i) {
    if (isMasked(mask(i, i))) {
      throw NumericError("validateMask: diagonal entry " + std::to_string(i) + " is excluded");
    }
    bool finite = false;
    for (Index j = 0; j < mask.cols(); ++j) {
      if (!isMasked(mask(i, j))) {
        finite = true;
        break;
      }
    }
    if (!finite) {
      throw DegenerateRowError(i, "validateMask: row " + std::to_string(i) +
                                      " has no admitted pair");
    }
  }
}

Index DynamicGraphSchedule::periodOf(Index step) const {
  if (boundaries.size() < 2 || step < boundaries.front() || step >= boundaries.back()) {
    throw std::out_of_range("DynamicGraphSchedule: step " + std::to_string(step) +
                            " outside the scheduled range");
  }
  const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), step);
  return static_cast<Index>(it - boundaries.begin()) - 1;
}

const AttentionMask& DynamicGraphSchedule::maskAt(Index step) const {
  return masks[static_cast<std::size_t>(periodOf(step))];
}

DynamicGraphSchedule scheduleGraphs(
    const std::vector<std::vector<SparseSpectrum>>& spectra_by_period,
    const std::vector<Index>& boundaries, Index k) {
  if (spectra_by_period.empty()) throw ConfigError("scheduleGraphs: no periods");
  if (boundaries.size() != spectra_by_period.size() + 1) {
    throw ConfigError("scheduleGraphs: boundary count " + std::to_string(boundaries.size()) +
                      " does not fit " + std::to_string(spectra_by_period.size()) + " periods");
  }
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw ConfigError("scheduleGraphs: boundaries must be sorted");
  }
  DynamicGraphSchedule sched;
  sched.boundaries = boundaries;
  for (const auto& spectra : spectra_by_period) {
    if (spectra.empty()) throw ConfigError("scheduleGraphs: empty period");
    sched.masks.push_back(buildDynamicMask(distanceMatrix(spectra), k));
  }
  return sched;
}

std::vector<Index> evenPeriodBoundaries(Index total_steps, Index periods) {
  if (periods < 1 || total_steps < periods) {
    throw ConfigError("evenPeriodBoundaries: cannot split " + std::to_string(total_steps) +
                      " steps into " + std::to_string(periods) + " periods");
  }
  std::vector<Index> b(static_cast<std::size_t>(periods) + 1);
  const Index base = total_steps / periods;
  const Index extra = total_steps % periods;
  b[0] = 0;
  for (Index p = 0; p < periods; ++p) {
    b[static_cast<std::size_t>(p) + 1] = b[static_cast<std::size_t>(p)] + base + (p < extra ? 1 : 0);
  }
  return b;
}

}  // namespace fedst
