#pragma once

#include <vector>

#include "fedst/spectral.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Sensor geometry as a weighted edge list. Distances are physical and
/// nonnegative; indices address the dataset's node order.
struct StaticGraph {
  struct Edge {
    Index from = 0;
    Index to = 0;
    double distance = 0.0;
  };

  Index n = 0;
  std::vector<Edge> edges;
};

/// N×N attention mask. Finite entries are admitted pairs; kMasked marks
/// excluded ones. Builders guarantee a finite diagonal so every row survives
/// maskedSoftmaxRows.
using AttentionMask = Matrix;

/// Identity-pattern mask: diagonal 1, everything else excluded. The
/// convention for datasets without sensor geometry.
AttentionMask identityMask(Index n);

/// Thresholded Gaussian kernel over edge distances:
///   w_ij = exp(−d_ij² / σ²), σ = standard deviation of all edge distances.
/// Pairs with w < kappa (and non-edges) are excluded; the diagonal is forced
/// to 1. Zero-variance distances fall back to σ = 1 with a warning.
AttentionMask buildStaticMask(const StaticGraph& g, double kappa);

/// Per-row top-k neighborhoods of a distance matrix. The k smallest-distance
/// nodes j≠i (ties broken by lower index) receive
///   −(d_ij − min_i) / (max_i − min_i + 1e-12),
/// min/max over the selected neighbors, so the closest neighbor maps to 0 and
/// the farthest to −1. The diagonal is 0; everything else is excluded.
AttentionMask buildDynamicMask(const Matrix& distances, Index k);

/// Throws unless every row has a finite entry and the diagonal is finite.
void validateMask(const AttentionMask& mask);

/// One dynamic mask per time period. boundaries has period_count+1 entries;
/// period p covers steps [boundaries[p], boundaries[p+1]).
struct DynamicGraphSchedule {
  std::vector<Index> boundaries;
  std::vector<AttentionMask> masks;

  Index periodCount() const { return static_cast<Index>(masks.size()); }
  Index periodOf(Index step) const;
  const AttentionMask& maskAt(Index step) const;
};

/// Builds one mask per period from that period's trend spectra
/// (distanceMatrix + buildDynamicMask). boundaries as in the schedule struct.
DynamicGraphSchedule scheduleGraphs(
    const std::vector<std::vector<SparseSpectrum>>& spectra_by_period,
    const std::vector<Index>& boundaries, Index k);

/// Evenly partitions [0, total_steps) into `periods` spans (the first spans
/// absorb the remainder). Returns periods+1 boundary steps.
std::vector<Index> evenPeriodBoundaries(Index total_steps, Index periods);

}  // namespace fedst
