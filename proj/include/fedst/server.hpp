#pragma once

#include <string>
#include <vector>

#include "fedst/graphs.hpp"
#include "fedst/nn.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// One value-attention branch of an encoder layer. The branch is paired with
/// an attention mask at forward time; `name` keys its parameters.
struct ServerBranch {
  std::string name;
  Matrix wv;  // hidden×hidden
  Matrix bv;  // 1×hidden
};

/// Encoder layer: every branch aggregates the layer input under its mask,
/// branch outputs are concatenated and projected back to hidden width, and
/// the projection is added to the input (residual).
struct ServerLayer {
  std::vector<ServerBranch> branches;
  Matrix w_p;  // (branches·hidden)×hidden
  Matrix b_p;  // 1×hidden
};

struct ServerParams {
  std::vector<ServerLayer> layers;

  Index hiddenDim() const {
    return layers.empty() ? 0 : layers.front().branches.front().wv.rows();
  }
  Index layerCount() const { return static_cast<Index>(layers.size()); }
  Index branchCount() const {
    return layers.empty() ? 0 : static_cast<Index>(layers.front().branches.size());
  }
};

/// The full model uses {"static", "dynamic"}; ablations drop one branch or
/// replace both with a single "uniform" branch under an all-zero mask.
ServerParams makeServerParams(Index hidden, Index num_layers,
                              const std::vector<std::string>& branch_names, Rng& rng);

ParamRefs paramRefs(ServerParams& p, const std::string& prefix = "srv");

/// out = Softmax(mask)·(h·w_v + b_v): attention weights come entirely from
/// the mask, values from a learned projection of the node features.
Matrix maskedValueAttention(const Matrix& h, const AttentionMask& mask, const Matrix& w_v,
                            const Matrix& b_v);

/// Unsimplified reference path: Softmax((Q·Kᵀ/√d) ⊙ mask01)·V with 0/1
/// Hadamard masking of the logits (masked logits become 0, not −inf).
/// Kept for approximation studies; production aggregation is
/// maskedValueAttention.
Matrix fullMaskedAttention(const Matrix& h, const Matrix& mask01, const Matrix& w_q,
                           const Matrix& w_k, const Matrix& w_v);

struct ServerLayerCache {
  Matrix x;                     // layer input
  std::vector<Matrix> softmax;  // per branch, row-stochastic
  std::vector<Matrix> value;    // per branch, x·wv + bv
  Matrix concat;
};

struct ServerCache {
  std::vector<ServerLayerCache> layers;
  const ServerParams* params = nullptr;
};

/// Runs the encoder stack over node features h (N×hidden). `masks` pairs
/// positionally with the branches of every layer.
std::pair<Matrix, ServerCache> serverForward(const Matrix& h,
                                             const std::vector<AttentionMask>& masks,
                                             const ServerParams& p);

/// Branch outputs of the dual-mask forward pass, before and after the final
/// projection.
struct AggregatedFeatures {
  Matrix h_static;
  Matrix h_dynamic;
  Matrix h_agg;
};

/// Dual-branch convenience wrapper: branch 0 under the distance mask,
/// branch 1 under the dynamic mask.
std::pair<AggregatedFeatures, ServerCache> serverForward(const Matrix& h,
                                                         const AttentionMask& mask_dis,
                                                         const AttentionMask& mask_dyn,
                                                         const ServerParams& p);

/// Reverse pass: parameter gradients plus d_h, the gradient with respect to
/// the uploaded node features (one row per node, for download to clients).
std::pair<GradBundle, Matrix> serverBackward(const ServerCache& cache, const ServerParams& p,
                                             const Matrix& d_h_agg,
                                             const std::string& prefix = "srv");

}  // namespace fedst
