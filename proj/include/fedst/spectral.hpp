#pragma once

#include <vector>

#include "fedst/error.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Fourier coefficients of a series after modulus thresholding. Indices are
/// the retained positions k ∈ [0, source_length), strictly increasing;
/// values[j] is the complex coefficient at indices[j].
struct SparseSpectrum {
  std::vector<Index> indices;
  ComplexVector values;
  Index source_length = 0;
  double threshold = 0.0;

  Index size() const { return static_cast<Index>(indices.size()); }
};

/// Sorted union of the retained index sets of several clients; the common
/// coordinate system for spectral distances.
struct UnionBasis {
  std::vector<Index> indices;

  Index size() const { return static_cast<Index>(indices.size()); }
  bool contains(Index k) const;
};

/// Unnormalized forward transform: coef[k] = Σ_t x[t]·exp(−2πi·k·t/L).
/// Direct O(L²) evaluation; desk-scale lengths keep this cheap.
ComplexVector dft(const Vector& x);

/// Signed frequency of coefficient k under the (0, 1, …, ⌊(L−1)/2⌋,
/// −⌊L/2⌋, …, −1) ordering. Coefficients themselves are stored at raw
/// positions k ∈ [0, L).
Index signedFrequency(Index k, Index length);

/// x[t] = (1/L)·Σ_k coef[k]·exp(+2πi·k·t/L). The imaginary residue must stay
/// below `imag_tol` (the spectrum of a real series is conjugate-symmetric);
/// otherwise throws NumericError.
Vector inverseDft(const ComplexVector& coef, double imag_tol = 1e-6);

/// Keeps exactly the components with |coef| strictly greater than mu.
/// Throws NumericError when nothing survives; pipeline callers that need a
/// nonempty index set use sparsifyWithFallback instead.
SparseSpectrum filterSpectrum(const ComplexVector& coef, double mu);

/// filterSpectrum, falling back to the single largest-modulus component when
/// the threshold removes everything.
SparseSpectrum sparsifyWithFallback(const ComplexVector& coef, double mu);

/// How the filter threshold is interpreted: an absolute modulus, or a
/// fraction of the largest modulus in the spectrum.
struct ThresholdPolicy {
  enum class Mode { kAbsolute, kRelative };
  Mode mode = Mode::kRelative;
  double value = 0.1;

  double resolve(const ComplexVector& coef) const;
};

UnionBasis unionBasis(const std::vector<SparseSpectrum>& spectra);

/// Dense embedding of a sparse spectrum on a basis: retained values at their
/// basis slots, zero elsewhere. Every index of `s` must lie in the basis.
ComplexVector embedOnBasis(const SparseSpectrum& s, const UnionBasis& basis);

/// Root-mean-square complex difference over the union basis; absent indices
/// contribute zero. The transport map is fixed to the identity.
double fsd(const SparseSpectrum& a, const SparseSpectrum& b, const UnionBasis& basis);

/// Pairwise FSD over the union basis of all spectra. Symmetric, zero diagonal.
Matrix distanceMatrix(const std::vector<SparseSpectrum>& spectra);

/// Enumeration oracle: min over all permutations π of
/// ((1/T)·Σ_k |a(k) − b(π(k))|^p)^{1/p}, T = len(a). Lengths above 8 are
/// rejected (factorial blowup). Validation-only; production distance is fsd.
double wassersteinEnumeration(const ComplexVector& a, const ComplexVector& b, double p);

}  // namespace fedst
