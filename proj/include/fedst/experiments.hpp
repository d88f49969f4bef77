#pragma once

#include <cstdint>
#include <vector>

#include "fedst/config.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// One row of the privacy sweep: spectra of a synthetic trend are noised at
/// intensity E, reconstructed server-side, and a small GRU trained on the
/// reconstruction predicts the true future series.
struct PrivacyRow {
  double intensity = 0.0;
  double threshold = 0.0;
  double reconstruction_mse = 0.0;
  double model_rmse = 0.0;
  double success_rate = 0.0;
};

/// Runs the full sweep. Every intensity reuses the same seeded draws, so the
/// perturbation grows monotonically with E on a fixed seed.
std::vector<PrivacyRow> privacyExperiment(const PrivacySimConfig& sim, const ThresholdPolicy& mu,
                                          double alpha, std::uint64_t seed);

/// Validation metrics per neighbor count k on the configured dataset; the
/// machinery behind the edge-count sweep table.
struct EdgeSweepResult {
  std::vector<Index> ks;
  std::vector<Metrics> val_metrics;
};

EdgeSweepResult edgeSweepExperiment(const ExperimentConfig& cfg, const std::vector<Index>& ks);

std::string formatEdgeSweepTable(const EdgeSweepResult& sweep);

}  // namespace fedst
