#include "fedst/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace fedst {

bool UnionBasis::contains(Index k) const {
  return std::binary_search(indices.begin(), indices.end(), k);
}

ComplexVector dft(const Vector& x) {
  const Index n = x.size();
  if (n < 1) throw ConfigError("dft: empty series");
  if (!x.allFinite()) throw NumericError("dft: non-finite input");
  ComplexVector coef(n);
  const double step = -2.0 * std::numbers::pi / static_cast<double>(n);
  for (Index k = 0; k < n; ++k) {
    Complex acc(0.0, 0.0);
    for (Index t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, step * static_cast<double>(k) * static_cast<double>(t));
    }
    coef[k] = acc;
  }
  return coef;
}

Index signedFrequency(Index k, Index length) {
  if (k < 0 || k >= length) {
    throw ConfigError("signedFrequency: index " + std::to_string(k) + " outside [0, " +
                      std::to_string(length) + ")");
  }
  return k <= (length - 1) / 2 ? k : k - length;
}

Vector inverseDft(const ComplexVector& coef, double imag_tol) {
  const Index n = coef.size();
  if (n < 1) throw ConfigError("inverseDft: empty spectrum");
  Vector x(n);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  double max_imag = 0.0;
  for (Index t = 0; t < n; ++t) {
    Complex acc(0.0, 0.0);
    for (Index k = 0; k < n; ++k) {
      acc += coef[k] * std::polar(1.0, step * static_cast<double>(k) * static_cast<double>(t));
    }
    acc /= static_cast<double>(n);
    max_imag = std::max(max_imag, std::abs(acc.imag()));
    x[t] = acc.real();
  }
  if (max_imag >= imag_tol) {
    throw NumericError("inverseDft: spectrum is not conjugate-symmetric (imaginary residue " +
                       std::to_string(max_imag) + ")");
  }
  return x;
}

SparseSpectrum filterSpectrum(const ComplexVector& coef, double mu) {
  if (mu < 0.0) throw ConfigError("filterSpectrum: mu must be nonnegative");
  SparseSpectrum s;
  s.source_length = coef.size();
  s.threshold = mu;
  std::vector<Complex> kept;
  for (Index k = 0; k < coef.size(); ++k) {
    if (std::abs(coef[k]) > mu) {  // strict: ties at |coef| == mu are dropped
      s.indices.push_back(k);
      kept.push_back(coef[k]);
    }
  }
  if (s.indices.empty()) {
    throw NumericError("filterSpectrum: no component exceeds threshold " + std::to_string(mu));
  }
  s.values.resize(static_cast<Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) s.values[static_cast<Index>(i)] = kept[i];
  return s;
}

SparseSpectrum sparsifyWithFallback(const ComplexVector& coef, double mu) {
  try {
    return filterSpectrum(coef, mu);
  } catch (const NumericError&) {
    Index best = 0;
    for (Index k = 1; k < coef.size(); ++k) {
      if (std::abs(coef[k]) > std::abs(coef[best])) best = k;
    }
    SparseSpectrum s;
    s.source_length = coef.size();
    s.threshold = mu;
    s.indices = {best};
    s.values.resize(1);
    s.values[0] = coef[best];
    return s;
  }
}

double ThresholdPolicy::resolve(const ComplexVector& coef) const {
  if (mode == Mode::kAbsolute) return value;
  double max_mod = 0.0;
  for (Index k = 0; k < coef.size(); ++k) max_mod = std::max(max_mod, std::abs(coef[k]));
  return value * max_mod;
}

UnionBasis unionBasis(const std::vector<SparseSpectrum>& spectra) {
  if (spectra.empty()) throw ConfigError("unionBasis: empty spectrum list");
  const Index len = spectra.front().source_length;
  std::vector<Index> all;
  for (const SparseSpectrum& s : spectra) {
    if (s.source_length != len) {
      throw ConfigError("unionBasis: mixed source lengths " + std::to_string(len) + " and " +
                        std::to_string(s.source_length));
    }
    all.insert(all.end(), s.indices.begin(), s.indices.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  UnionBasis b;
  b.indices = std::move(all);
  return b;
}

ComplexVector embedOnBasis(const SparseSpectrum& s, const UnionBasis& basis) {
  ComplexVector v = ComplexVector::Zero(basis.size());
  std::size_t cursor = 0;
  for (Index j = 0; j < s.size(); ++j) {
    const Index k = s.indices[static_cast<std::size_t>(j)];
    while (cursor < basis.indices.size() && basis.indices[cursor] < k) ++cursor;
    if (cursor >= basis.indices.size() || basis.indices[cursor] != k) {
      throw ProtocolError("embedOnBasis: index " + std::to_string(k) +
                          " is not part of the union basis");
    }
    v[static_cast<Index>(cursor)] = s.values[j];
  }
  return v;
}

double fsd(const SparseSpectrum& a, const SparseSpectrum& b, const UnionBasis& basis) {
  if (basis.size() < 1) throw ConfigError("fsd: empty basis");
  const ComplexVector va = embedOnBasis(a, basis);
  const ComplexVector vb = embedOnBasis(b, basis);
  double acc = 0.0;
  for (Index j = 0; j < basis.size(); ++j) acc += std::norm(va[j] - vb[j]);
  return std::sqrt(acc / static_cast<double>(basis.size()));
}

Matrix distanceMatrix(const std::vector<SparseSpectrum>& spectra) {
  const Index n = static_cast<Index>(spectra.size());
  if (n < 2) throw ConfigError("distanceMatrix: need at least two spectra");
  const UnionBasis basis = unionBasis(spectra);
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double v =
          fsd(spectra[static_cast<std::size_t>(i)], spectra[static_cast<std::size_t>(j)], basis);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double wassersteinEnumeration(const ComplexVector& a, const ComplexVector& b, double p) {
  if (a.size() != b.size()) {
    throw DimensionError("wassersteinEnumeration: lengths " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()) + " differ");
  }
  const Index n = a.size();
  if (n > 8) {
    throw ConfigError("wassersteinEnumeration: length " + std::to_string(n) +
                      " exceeds the enumeration limit of 8");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (Index k = 0; k < n; ++k) {
      acc += std::pow(std::abs(a[k] - b[perm[static_cast<std::size_t>(k)]]), p);
    }
    best = std::min(best, std::pow(acc / static_cast<double>(n), 1.0 / p));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace fedst
