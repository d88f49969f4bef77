#include "fedst/server.hpp"

#include <cmath>

namespace fedst {

ServerParams makeServerParams(Index hidden, Index num_layers,
                              const std::vector<std::string>& branch_names, Rng& rng) {
  if (branch_names.empty()) throw ConfigError("makeServerParams: need at least one branch");
  ServerParams p;
  const Index nb = static_cast<Index>(branch_names.size());
  for (Index l = 0; l < num_layers; ++l) {
    ServerLayer layer;
    for (const std::string& name : branch_names) {
      ServerBranch b;
      b.name = name;
      b.wv = uniformInit(hidden, hidden, hidden, rng);
      b.bv = Matrix::Zero(1, hidden);
      layer.branches.push_back(std::move(b));
    }
    layer.w_p = uniformInit(nb * hidden, hidden, nb * hidden, rng);
    layer.b_p = Matrix::Zero(1, hidden);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

ParamRefs paramRefs(ServerParams& p, const std::string& prefix) {
  ParamRefs refs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    for (auto& b : p.layers[l].branches) {
      refs.emplace_back(base + b.name + ".wv", &b.wv);
      refs.emplace_back(base + b.name + ".bv", &b.bv);
    }
    refs.emplace_back(base + "w_p", &p.layers[l].w_p);
    refs.emplace_back(base + "b_p", &p.layers[l].b_p);
  }
  return refs;
}

Matrix maskedValueAttention(const Matrix& h, const AttentionMask& mask, const Matrix& w_v,
                            const Matrix& b_v) {
  if (h.rows() != mask.rows()) {
    throw DimensionError("maskedValueAttention: features are " + shapeStr(h.rows(), h.cols()) +
                         " but mask is " + shapeStr(mask.rows(), mask.cols()));
  }
  return maskedSoftmaxRows(mask) * linearForward(h, w_v, b_v);
}

Matrix fullMaskedAttention(const Matrix& h, const Matrix& mask01, const Matrix& w_q,
                           const Matrix& w_k, const Matrix& w_v) {
  for (Index i = 0; i < mask01.rows(); ++i) {
    for (Index j = 0; j < mask01.cols(); ++j) {
      if (mask01(i, j) != 0.0 && mask01(i, j) != 1.0) {
        throw ConfigError("fullMaskedAttention: mask entries must be 0 or 1");
      }
    }
  }
  const Matrix q = h * w_q;
  const Matrix k = h * w_k;
  const Matrix v = h * w_v;
  const double scale = 1.0 / std::sqrt(static_cast<double>(w_q.cols()));
  Matrix logits = ((q * k.transpose()) * scale).cwiseProduct(mask01);
  return maskedSoftmaxRows(logits) * v;  // all entries finite: plain softmax
}

std::pair<Matrix, ServerCache> serverForward(const Matrix& h,
                                             const std::vector<AttentionMask>& masks,
                                             const ServerParams& p) {
  if (p.layers.empty()) throw ConfigError("serverForward: no layers");
  if (static_cast<Index>(masks.size()) != p.branchCount()) {
    throw DimensionError("serverForward: " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(p.branchCount()) + " branches");
  }
  const Index n = h.rows();
  for (const AttentionMask& m : masks) {
    if (m.rows() != n || m.cols() != n) {
      throw DimensionError("serverForward: mask is " + shapeStr(m.rows(), m.cols()) +
                           " but features are " + shapeStr(h.rows(), h.cols()));
    }
  }

  // Row-stochastic attention matrices are shared by all layers of the stack.
  std::vector<Matrix> softmaxed;
  softmaxed.reserve(masks.size());
  for (const AttentionMask& m : masks) softmaxed.push_back(maskedSoftmaxRows(m));

  ServerCache cache;
  cache.params = &p;
  Matrix x = h;
  for (const ServerLayer& layer : p.layers) {
    ServerLayerCache lc;
    lc.x = x;
    lc.softmax = softmaxed;
    const Index hidden = p.hiddenDim();
    lc.concat.resize(n, static_cast<Index>(layer.branches.size()) * hidden);
    for (std::size_t b = 0; b < layer.branches.size(); ++b) {
      lc.value.push_back(linearForward(x, layer.branches[b].wv, layer.branches[b].bv));
      lc.concat.middleCols(static_cast<Index>(b) * hidden, hidden) =
          softmaxed[b] * lc.value.back();
    }
    x += linearForward(lc.concat, layer.w_p, layer.b_p);
    cache.layers.push_back(std::move(lc));
  }
  return {x, std::move(cache)};
}

std::pair<AggregatedFeatures, ServerCache> serverForward(const Matrix& h,
                                                         const AttentionMask& mask_dis,
                                                         const AttentionMask& mask_dyn,
                                                         const ServerParams& p) {
  if (p.branchCount() != 2) {
    throw ConfigError("serverForward: dual-mask entry point needs a two-branch model");
  }
  auto [h_agg, cache] = serverForward(h, std::vector<AttentionMask>{mask_dis, mask_dyn}, p);
  AggregatedFeatures agg;
  const auto& last = cache.layers.back();
  const Index hidden = p.hiddenDim();
  agg.h_static = last.concat.middleCols(0, hidden);
  agg.h_dynamic = last.concat.middleCols(hidden, hidden);
  agg.h_agg = h_agg;
  return {std::move(agg), std::move(cache)};
}

std::pair<GradBundle, Matrix> serverBackward(const ServerCache& cache, const ServerParams& p,
                                             const Matrix& d_h_agg, const std::string& prefix) {
  if (cache.params != &p) {
    throw ProtocolError("serverBackward: cache was produced by a different parameter set");
  }
  const Index hidden = p.hiddenDim();
  if (d_h_agg.cols() != hidden || d_h_agg.rows() != cache.layers.front().x.rows()) {
    throw DimensionError("serverBackward: d_h_agg is " +
                         shapeStr(d_h_agg.rows(), d_h_agg.cols()));
  }

  GradBundle out;
  Matrix d_x = d_h_agg;
  for (std::size_t l = cache.layers.size(); l-- > 0;) {
    const ServerLayer& layer = p.layers[l];
    const ServerLayerCache& lc = cache.layers[l];
    const std::string base = prefix + ".l" + std::to_string(l) + ".";

    const LinearGrads proj = linearBackward(lc.concat, layer.w_p, d_x);
    out.add(base + "w_p", proj.dw);
    out.add(base + "b_p", proj.db);

    Matrix d_in = d_x;  // residual path
    for (std::size_t b = 0; b < layer.branches.size(); ++b) {
      const Matrix d_branch = proj.dx.middleCols(static_cast<Index>(b) * hidden, hidden);
      const Matrix d_value = lc.softmax[b].transpose() * d_branch;
      const LinearGrads vg = linearBackward(lc.x, layer.branches[b].wv, d_value);
      out.add(base + layer.branches[b].name + ".wv", vg.dw);
      out.add(base + layer.branches[b].name + ".bv", vg.db);
      d_in += vg.dx;
    }
    d_x = std::move(d_in);
  }
  return {std::move(out), std::move(d_x)};
}

}  // namespace fedst
