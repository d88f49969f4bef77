#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedst/error.hpp"
#include "fedst/rng.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Named gradient container. Parameter gradients are keyed by the owning
/// model's parameter names; `inputs` holds gradients with respect to a
/// producer-defined list of input tensors (one per GRU step, for instance).
class GradBundle {
 public:
  /// Accumulates `g` into the entry for `name`, creating it if absent.
  void add(const std::string& name, const Matrix& g);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return grads_.count(name) > 0; }
  const std::map<std::string, Matrix>& entries() const { return grads_; }

  /// Elementwise accumulation of every entry of `other` (shapes must agree).
  void merge(const GradBundle& other);
  void scale(double factor);

  std::vector<Matrix> inputs;

 private:
  std::map<std::string, Matrix> grads_;
};

/// (name, tensor) view of a model's learnable parameters, in a fixed order.
using ParamRef = std::pair<std::string, Matrix*>;
using ParamRefs = std::vector<ParamRef>;

/// Weights drawn uniformly from ±1/sqrt(fan_in); used by every model init.
Matrix uniformInit(Index rows, Index cols, Index fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Linear layer
// ---------------------------------------------------------------------------

/// out[r] = x[r]·w + b, with b a 1×cols row. Throws DimensionError naming
/// both shapes on mismatch.
Matrix linearForward(const Matrix& x, const Matrix& w, const Matrix& b);

struct LinearGrads {
  Matrix dx;
  Matrix dw;
  Matrix db;
};

LinearGrads linearBackward(const Matrix& x, const Matrix& w, const Matrix& d_out);

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

/// One stacked-GRU layer. Recurrence per step:
///   z = sigmoid(x·w_xz + h·w_hz + b_z)
///   r = sigmoid(x·w_xr + h·w_hr + b_r)
///   n = tanh(x·w_xn + r ⊙ (h·w_hn) + b_n)
///   h' = (1 − z) ⊙ n + z ⊙ h
struct GruLayerParams {
  Matrix w_xz, w_hz, w_xr, w_hr, w_xn, w_hn;
  Matrix b_z, b_r, b_n;  // 1×hidden rows
};

struct GruParams {
  std::vector<GruLayerParams> layers;

  Index inputDim() const { return layers.empty() ? 0 : layers.front().w_xz.rows(); }
  Index hiddenDim() const { return layers.empty() ? 0 : layers.front().w_xz.cols(); }
  Index layerCount() const { return static_cast<Index>(layers.size()); }
};

GruParams makeGruParams(Index input_dim, Index hidden_dim, Index num_layers, Rng& rng);

/// Parameter views named "<prefix>.l<k>.<w_xz|...|b_n>".
ParamRefs paramRefs(GruParams& p, const std::string& prefix);

struct GruStepCache {
  Matrix x, h_prev, z, r, n, u;  // u = h_prev·w_hn
};

struct GruCache {
  std::vector<std::vector<GruStepCache>> steps;  // [layer][t]
  Matrix h_final;                                // top layer, last step (B×hidden)
  Index batch = 0;
  const GruParams* params = nullptr;  // backward must see the same params
};

/// Batched core: xs[t] is the step-t input, B×input_dim. h0 has one row per
/// layer when B == 1, or layers entries of B×hidden via gruForwardBatched.
std::pair<Matrix, GruCache> gruForwardBatched(const std::vector<Matrix>& xs,
                                              const GruParams& p,
                                              const std::vector<Matrix>& h0);

/// Single-sequence convenience: seq is T×input_dim, h0 is layers×hidden
/// (one initial state row per layer). Returns (h_final 1×hidden, cache).
std::pair<Matrix, GruCache> gruSequenceForward(const Matrix& seq, const GruParams& p,
                                               const Matrix& h0);

/// Reverse-mode pass. d_h_final matches the forward's h_final shape; the
/// returned bundle carries one gradient per parameter (under `prefix`) and
/// per-step input gradients in `inputs`. Rejects a cache built by different
/// parameters with ProtocolError.
GradBundle gruBackward(const GruCache& cache, const GruParams& p, const Matrix& d_h_final,
                       const std::string& prefix = "gru");

// ---------------------------------------------------------------------------
// Masked softmax
// ---------------------------------------------------------------------------

/// Row-wise softmax over the finite entries of `m`; sentinel positions map to
/// exactly 0. A row with no finite entry raises DegenerateRowError with the
/// row index.
Matrix maskedSoftmaxRows(const Matrix& m);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// SGD with classical momentum:
///   v = momentum·v + g;  p -= lr·v
/// Velocities are keyed by parameter name and owned by this object, so one
/// optimizer instance serves exactly one parameter set.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum);

  void step(const ParamRefs& params, const GradBundle& grads);

  double lr() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Matrix> velocity_;
};

}  // namespace fedst
