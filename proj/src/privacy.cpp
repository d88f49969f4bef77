#include "fedst/privacy.hpp"

#include <cmath>
#include <numbers>

#include "fedst/error.hpp"

namespace fedst {

void NoisePolicy::validate() const {
  if (!(alpha > 0.0) || alpha > 2.0) {
    throw ConfigError("NoisePolicy: alpha must lie in (0,2], got " + std::to_string(alpha));
  }
  if (beta < -1.0 || beta > 1.0) {
    throw ConfigError("NoisePolicy: beta must lie in [-1,1], got " + std::to_string(beta));
  }
  if (target == Target::kHidden && !(scale > 0.0)) {
    throw ConfigError("NoisePolicy: hidden-state target needs scale c > 0");
  }
  if (target == Target::kSpectrum && intensity < 0.0) {
    throw ConfigError("NoisePolicy: spectrum target needs intensity E >= 0");
  }
}

double sampleStableStandard(double alpha, double beta, Rng& rng) {
  if (!(alpha > 0.0) || alpha > 2.0) {
    throw ConfigError("sampleStableStandard: alpha must lie in (0,2]");
  }
  const double u = std::numbers::pi * (uniform01(rng) - 0.5);  // uniform on (−π/2, π/2)
  const double w = -std::log(uniform01(rng));                  // exponential, mean 1

  if (alpha == 1.0) {
    const double half_pi = std::numbers::pi / 2.0;
    if (beta == 0.0) return std::tan(u);
    return (1.0 / half_pi) *
           ((half_pi + beta * u) * std::tan(u) -
            beta * std::log((half_pi * w * std::cos(u)) / (half_pi + beta * u)));
  }

  const double zeta = beta * std::tan(std::numbers::pi * alpha / 2.0);
  const double b = std::atan(zeta) / alpha;
  const double s = std::pow(1.0 + zeta * zeta, 1.0 / (2.0 * alpha));
  return s * std::sin(alpha * (u + b)) / std::pow(std::cos(u), 1.0 / alpha) *
         std::pow(std::cos(u - alpha * (u + b)) / w, (1.0 - alpha) / alpha);
}

Vector sampleStable(const NoisePolicy& policy, Index n, Rng& rng) {
  policy.validate();
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    double x = policy.scale * sampleStableStandard(policy.alpha, policy.beta, rng);
    if (policy.alpha == 1.0 && policy.beta != 0.0) {
      x += (2.0 / std::numbers::pi) * policy.beta * policy.scale * std::log(policy.scale);
    }
    out[i] = x + policy.shift;
  }
  return out;
}

double cauchyMinScale(const DpBudget& budget) {
  if (!(budget.epsilon > 0.0)) throw ConfigError("cauchyMinScale: epsilon must be positive");
  if (!(budget.delta > 0.0) || budget.delta >= 0.5) {
    throw ConfigError("cauchyMinScale: delta must lie in (0, 1/2)");
  }
  if (!(budget.sensitivity > 0.0)) {
    throw ConfigError("cauchyMinScale: sensitivity must be positive");
  }
  const double numer = budget.sensitivity * (1.0 + std::exp(budget.epsilon / 2.0));
  const double denom = (std::exp(budget.epsilon) - 1.0) *
                       (0.5 + std::tan(std::numbers::pi * budget.delta));
  return numer / denom;
}

Matrix noiseHidden(const Matrix& h, const NoisePolicy& policy, Rng& rng) {
  if (policy.target != NoisePolicy::Target::kHidden) {
    throw ConfigError("noiseHidden: policy target is not the hidden state");
  }
  policy.validate();
  Matrix out = h;
  const Vector noise = sampleStable(policy, h.size(), rng);
  Index pos = 0;
  for (Index r = 0; r < out.rows(); ++r) {
    for (Index c = 0; c < out.cols(); ++c, ++pos) out(r, c) += noise[pos];
  }
  return out;
}

SparseSpectrum noiseSpectrum(const SparseSpectrum& s, const NoisePolicy& policy, Rng& rng) {
  if (policy.target != NoisePolicy::Target::kSpectrum) {
    throw ConfigError("noiseSpectrum: policy target is not the spectrum");
  }
  policy.validate();
  SparseSpectrum out = s;
  for (Index j = 0; j < s.size(); ++j) {
    const double amp = std::abs(s.values[j]);
    const double phase = std::arg(s.values[j]);
    // β and shift are fixed at zero for spectra; scale follows the amplitude.
    const double draw =
        policy.intensity * amp * sampleStableStandard(policy.alpha, 0.0, rng);
    out.values[j] = std::polar(std::max(0.0, amp + draw), phase);
  }
  return out;
}

Vector attackReconstruct(const std::vector<SparseSpectrum>& spectra_by_period,
                         Index period_len) {
  if (spectra_by_period.empty()) throw ConfigError("attackReconstruct: no spectra");
  Vector out(period_len * static_cast<Index>(spectra_by_period.size()));
  Index offset = 0;
  for (const SparseSpectrum& s : spectra_by_period) {
    if (s.source_length != period_len) {
      throw ConfigError("attackReconstruct: spectrum length " +
                        std::to_string(s.source_length) + " does not embed at " +
                        std::to_string(period_len));
    }
    ComplexVector full = ComplexVector::Zero(period_len);
    for (Index j = 0; j < s.size(); ++j) full[s.indices[static_cast<std::size_t>(j)]] = s.values[j];
    // Project onto the conjugate-symmetric subspace: independent amplitude
    // noise on a mirrored pair breaks exact symmetry.
    ComplexVector sym(period_len);
    for (Index k = 0; k < period_len; ++k) {
      const Index mirror = (period_len - k) % period_len;
      sym[k] = 0.5 * (full[k] + std::conj(full[mirror]));
    }
    out.segment(offset, period_len) = inverseDft(sym);
    offset += period_len;
  }
  return out;
}

double attackSuccessRate(const Vector& predictions, const Vector& truth, double threshold) {
  if (predictions.size() != truth.size()) {
    throw DimensionError("attackSuccessRate: lengths differ");
  }
  if (!(threshold > 0.0)) throw ConfigError("attackSuccessRate: threshold must be positive");
  if (predictions.size() == 0) return 0.0;
  Index hits = 0;
  for (Index i = 0; i < predictions.size(); ++i) {
    if (std::abs(predictions[i] - truth[i]) <= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace fedst
