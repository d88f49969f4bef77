#pragma once

#include <vector>

#include "fedst/rng.hpp"
#include "fedst/spectral.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// α-stable noise configuration. Hidden-state noise uses the absolute scale
/// c; spectrum noise scales each component by intensity·|component|.
struct NoisePolicy {
  enum class Target { kOff, kHidden, kSpectrum };

  double alpha = 1.0;
  double beta = 0.0;
  double scale = 1.0;      // c, hidden-state target
  double intensity = 0.0;  // E, spectrum target
  double shift = 0.0;
  Target target = Target::kOff;

  void validate() const;
};

struct DpBudget {
  double epsilon = 0.0;
  double delta = 0.0;
  double sensitivity = 0.0;  // Δf
};

/// One standard draw (unit scale, zero shift) via the Chambers–Mallows–Stuck
/// construction. α=2 reduces to a Gaussian with variance 2; α=1, β=0 to a
/// unit Cauchy.
double sampleStableStandard(double alpha, double beta, Rng& rng);

/// n i.i.d. draws at the policy's scale and shift.
Vector sampleStable(const NoisePolicy& policy, Index n, Rng& rng);

/// Smallest Cauchy scale for (ε,δ)-DP at sensitivity Δf:
///   Δf·(1 + e^{ε/2}) / ((e^ε − 1)·(1/2 + tan(πδ))).
/// Callers must pick c strictly above this bound. Requires δ ∈ (0, 1/2).
double cauchyMinScale(const DpBudget& budget);

/// Elementwise additive stable noise on an uploaded hidden state.
Matrix noiseHidden(const Matrix& h, const NoisePolicy& policy, Rng& rng);

/// Amplitude-only perturbation of a sparse spectrum: each retained component
/// gets amplitude max(0, a + draw(scale = intensity·a)); phases and the index
/// set never change, so no new frequency appears.
SparseSpectrum noiseSpectrum(const SparseSpectrum& s, const NoisePolicy& policy, Rng& rng);

/// Server-side reconstruction: embed each period's sparse spectrum at full
/// length, restore conjugate symmetry, invert, and concatenate the periods.
Vector attackReconstruct(const std::vector<SparseSpectrum>& spectra_by_period, Index period_len);

/// Fraction of predictions within `threshold` of the truth.
double attackSuccessRate(const Vector& predictions, const Vector& truth, double threshold);

}  // namespace fedst
