#include "fedst/nn.hpp"

#include <cmath>

namespace fedst {

void GradBundle::add(const std::string& name, const Matrix& g) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_.emplace(name, g);
    return;
  }
  if (it->second.rows() != g.rows() || it->second.cols() != g.cols()) {
    throw DimensionError("gradient accumulation shape mismatch for '" + name + "': " +
                         shapeStr(it->second.rows(), it->second.cols()) + " vs " +
                         shapeStr(g.rows(), g.cols()));
  }
  it->second += g;
}

const Matrix& GradBundle::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    throw ProtocolError("no gradient entry for parameter '" + name + "'");
  }
  return it->second;
}

void GradBundle::merge(const GradBundle& other) {
  for (const auto& [name, g] : other.grads_) add(name, g);
  for (std::size_t i = 0; i < other.inputs.size(); ++i) {
    if (i < inputs.size()) {
      inputs[i] += other.inputs[i];
    } else {
      inputs.push_back(other.inputs[i]);
    }
  }
}

void GradBundle::scale(double factor) {
  for (auto& [name, g] : grads_) g *= factor;
  for (auto& g : inputs) g *= factor;
}

Matrix uniformInit(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = uniformRange(rng, -bound, bound);
  return m;
}

Matrix linearForward(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("linearForward: x is " + shapeStr(x.rows(), x.cols()) +
                         " but w is " + shapeStr(w.rows(), w.cols()));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("linearForward: bias is " + shapeStr(b.rows(), b.cols()) +
                         " but w is " + shapeStr(w.rows(), w.cols()));
  }
  Matrix out = x * w;
  out.rowwise() += b.row(0);
  return out;
}

LinearGrads linearBackward(const Matrix& x, const Matrix& w, const Matrix& d_out) {
  LinearGrads g;
  g.dx = d_out * w.transpose();
  g.dw = x.transpose() * d_out;
  g.db = d_out.colwise().sum();
  return g;
}

GruParams makeGruParams(Index input_dim, Index hidden_dim, Index num_layers, Rng& rng) {
  GruParams p;
  p.layers.reserve(static_cast<std::size_t>(num_layers));
  for (Index l = 0; l < num_layers; ++l) {
    const Index in = (l == 0) ? input_dim : hidden_dim;
    GruLayerParams lp;
    lp.w_xz = uniformInit(in, hidden_dim, in, rng);
    lp.w_hz = uniformInit(hidden_dim, hidden_dim, hidden_dim, rng);
    lp.w_xr = uniformInit(in, hidden_dim, in, rng);
    lp.w_hr = uniformInit(hidden_dim, hidden_dim, hidden_dim, rng);
    lp.w_xn = uniformInit(in, hidden_dim, in, rng);
    lp.w_hn = uniformInit(hidden_dim, hidden_dim, hidden_dim, rng);
    lp.b_z = Matrix::Zero(1, hidden_dim);
    lp.b_r = Matrix::Zero(1, hidden_dim);
    lp.b_n = Matrix::Zero(1, hidden_dim);
    p.layers.push_back(std::move(lp));
  }
  return p;
}

ParamRefs paramRefs(GruParams& p, const std::string& prefix) {
  ParamRefs refs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    GruLayerParams& lp = p.layers[l];
    refs.emplace_back(base + "w_xz", &lp.w_xz);
    refs.emplace_back(base + "w_hz", &lp.w_hz);
    refs.emplace_back(base + "w_xr", &lp.w_xr);
    refs.emplace_back(base + "w_hr", &lp.w_hr);
    refs.emplace_back(base + "w_xn", &lp.w_xn);
    refs.emplace_back(base + "w_hn", &lp.w_hn);
    refs.emplace_back(base + "b_z", &lp.b_z);
    refs.emplace_back(base + "b_r", &lp.b_r);
    refs.emplace_back(base + "b_n", &lp.b_n);
  }
  return refs;
}

namespace {

inline Matrix sigmoid(const Matrix& a) {
  return ((-a.array()).exp() + 1.0).inverse().matrix();
}

}  // namespace

std::pair<Matrix, GruCache> gruForwardBatched(const std::vector<Matrix>& xs,
                                              const GruParams& p,
                                              const std::vector<Matrix>& h0) {
  if (p.layers.empty()) throw ConfigError("gruForwardBatched: no layers");
  if (xs.empty()) throw ConfigError("gruForwardBatched: empty sequence");
  const Index layers = p.layerCount();
  const Index hidden = p.hiddenDim();
  const Index batch = xs.front().rows();
  if (xs.front().cols() != p.inputDim()) {
    throw DimensionError("gruForwardBatched: step input is " +
                         shapeStr(xs.front().rows(), xs.front().cols()) + " but layer 0 expects " +
                         std::to_string(p.inputDim()) + " columns");
  }
  if (static_cast<Index>(h0.size()) != layers) {
    throw DimensionError("gruForwardBatched: h0 must supply one state per layer");
  }

  GruCache cache;
  cache.params = &p;
  cache.batch = batch;
  cache.steps.assign(static_cast<std::size_t>(layers), {});

  std::vector<Matrix> layer_in;
  layer_in.reserve(xs.size());
  for (const Matrix& x : xs) layer_in.push_back(x);

  Matrix h_top;
  for (Index l = 0; l < layers; ++l) {
    const GruLayerParams& lp = p.layers[static_cast<std::size_t>(l)];
    Matrix h = h0[static_cast<std::size_t>(l)];
    if (h.rows() != batch || h.cols() != hidden) {
      throw DimensionError("gruForwardBatched: h0[" + std::to_string(l) + "] is " +
                           shapeStr(h.rows(), h.cols()) + ", expected " +
                           shapeStr(batch, hidden));
    }
    auto& layer_cache = cache.steps[static_cast<std::size_t>(l)];
    layer_cache.reserve(layer_in.size());
    for (std::size_t t = 0; t < layer_in.size(); ++t) {
      const Matrix& x = layer_in[t];
      GruStepCache sc;
      sc.x = x;
      sc.h_prev = h;
      sc.z = sigmoid(linearForward(x, lp.w_xz, lp.b_z) + h * lp.w_hz);
      sc.r = sigmoid(linearForward(x, lp.w_xr, lp.b_r) + h * lp.w_hr);
      sc.u = h * lp.w_hn;
      sc.n = (linearForward(x, lp.w_xn, lp.b_n).array() + sc.r.array() * sc.u.array())
                 .tanh()
                 .matrix();
      h = ((1.0 - sc.z.array()) * sc.n.array() + sc.z.array() * sc.h_prev.array()).matrix();
      if (!h.allFinite()) {
        throw NumericError("gruForwardBatched: non-finite activation at step " +
                           std::to_string(t) + ", layer " + std::to_string(l));
      }
      layer_cache.push_back(std::move(sc));
      layer_in[t] = h;  // becomes next layer's input
    }
    h_top = h;
  }
  cache.h_final = h_top;
  return {h_top, std::move(cache)};
}

std::pair<Matrix, GruCache> gruSequenceForward(const Matrix& seq, const GruParams& p,
                                               const Matrix& h0) {
  if (h0.rows() != p.layerCount() || h0.cols() != p.hiddenDim()) {
    throw DimensionError("gruSequenceForward: h0 is " + shapeStr(h0.rows(), h0.cols()) +
                         ", expected " + shapeStr(p.layerCount(), p.hiddenDim()));
  }
  std::vector<Matrix> xs;
  xs.reserve(static_cast<std::size_t>(seq.rows()));
  for (Index t = 0; t < seq.rows(); ++t) xs.push_back(seq.row(t));
  std::vector<Matrix> states;
  for (Index l = 0; l < p.layerCount(); ++l) states.push_back(h0.row(l));
  return gruForwardBatched(xs, p, states);
}

GradBundle gruBackward(const GruCache& cache, const GruParams& p, const Matrix& d_h_final,
                       const std::string& prefix) {
  if (cache.params != &p) {
    throw ProtocolError("gruBackward: cache was produced by a different parameter set");
  }
  const Index layers = p.layerCount();
  const Index hidden = p.hiddenDim();
  const std::size_t T = cache.steps.front().size();
  if (d_h_final.rows() != cache.batch || d_h_final.cols() != hidden) {
    throw DimensionError("gruBackward: d_h_final is " +
                         shapeStr(d_h_final.rows(), d_h_final.cols()) + ", expected " +
                         shapeStr(cache.batch, hidden));
  }

  GradBundle out;
  // Upstream gradient on each step's output of the current layer. The top
  // layer only receives d_h_final at the last step; lower layers receive the
  // input gradients of the layer above at every step.
  std::vector<Matrix> d_out(T, Matrix::Zero(cache.batch, hidden));
  d_out.back() = d_h_final;

  for (Index l = layers - 1; l >= 0; --l) {
    const GruLayerParams& lp = p.layers[static_cast<std::size_t>(l)];
    const auto& steps = cache.steps[static_cast<std::size_t>(l)];
    const Index in_dim = lp.w_xz.rows();
    const std::string base = prefix + ".l" + std::to_string(l) + ".";

    Matrix dw_xz = Matrix::Zero(in_dim, hidden), dw_hz = Matrix::Zero(hidden, hidden);
    Matrix dw_xr = Matrix::Zero(in_dim, hidden), dw_hr = Matrix::Zero(hidden, hidden);
    Matrix dw_xn = Matrix::Zero(in_dim, hidden), dw_hn = Matrix::Zero(hidden, hidden);
    Matrix db_z = Matrix::Zero(1, hidden), db_r = Matrix::Zero(1, hidden),
           db_n = Matrix::Zero(1, hidden);

    std::vector<Matrix> d_in(T);
    Matrix carry = Matrix::Zero(cache.batch, hidden);
    for (std::size_t t = T; t-- > 0;) {
      const GruStepCache& sc = steps[t];
      Matrix dh = d_out[t] + carry;

      Matrix dz = (dh.array() * (sc.h_prev.array() - sc.n.array())).matrix();
      Matrix dn = (dh.array() * (1.0 - sc.z.array())).matrix();
      Matrix dh_prev = (dh.array() * sc.z.array()).matrix();

      Matrix da_n = (dn.array() * (1.0 - sc.n.array().square())).matrix();
      db_n += da_n.colwise().sum();
      dw_xn += sc.x.transpose() * da_n;
      Matrix dx = da_n * lp.w_xn.transpose();
      Matrix dr = (da_n.array() * sc.u.array()).matrix();
      Matrix du = (da_n.array() * sc.r.array()).matrix();
      dw_hn += sc.h_prev.transpose() * du;
      dh_prev += du * lp.w_hn.transpose();

      Matrix da_r = (dr.array() * sc.r.array() * (1.0 - sc.r.array())).matrix();
      db_r += da_r.colwise().sum();
      dw_xr += sc.x.transpose() * da_r;
      dx += da_r * lp.w_xr.transpose();
      dh_prev += da_r * lp.w_hr.transpose();
      dw_hr += sc.h_prev.transpose() * da_r;

      Matrix da_z = (dz.array() * sc.z.array() * (1.0 - sc.z.array())).matrix();
      db_z += da_z.colwise().sum();
      dw_xz += sc.x.transpose() * da_z;
      dx += da_z * lp.w_xz.transpose();
      dh_prev += da_z * lp.w_hz.transpose();
      dw_hz += sc.h_prev.transpose() * da_z;

      d_in[t] = std::move(dx);
      carry = std::move(dh_prev);
    }

    out.add(base + "w_xz", dw_xz);
    out.add(base + "w_hz", dw_hz);
    out.add(base + "w_xr", dw_xr);
    out.add(base + "w_hr", dw_hr);
    out.add(base + "w_xn", dw_xn);
    out.add(base + "w_hn", dw_hn);
    out.add(base + "b_z", db_z);
    out.add(base + "b_r", db_r);
    out.add(base + "b_n", db_n);

    d_out = std::move(d_in);  // feeds the layer below
  }

  out.inputs = std::move(d_out);
  return out;
}

Matrix maskedSoftmaxRows(const Matrix& m) {
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    double row_max = kMasked;
    for (Index j = 0; j < m.cols(); ++j) {
      if (!isMasked(m(i, j)) && (isMasked(row_max) || m(i, j) > row_max)) row_max = m(i, j);
    }
    if (isMasked(row_max)) {
      throw DegenerateRowError(i, "maskedSoftmaxRows: row " + std::to_string(i) +
                                      " has no finite entry");
    }
    double sum = 0.0;
    for (Index j = 0; j < m.cols(); ++j) {
      if (!isMasked(m(i, j))) {
        out(i, j) = std::exp(m(i, j) - row_max);
        sum += out(i, j);
      }
    }
    out.row(i) /= sum;
  }
  return out;
}

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (lr <= 0.0) throw ConfigError("SgdMomentum: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("SgdMomentum: momentum must be in [0,1)");
}

void SgdMomentum::step(const ParamRefs& params, const GradBundle& grads) {
  for (const auto& [name, param] : params) {
    const Matrix& g = grads.at(name);
    if (g.rows() != param->rows() || g.cols() != param->cols()) {
      throw DimensionError("SgdMomentum: gradient for '" + name + "' is " +
                           shapeStr(g.rows(), g.cols()) + " but parameter is " +
                           shapeStr(param->rows(), param->cols()));
    }
    if (!g.allFinite()) {
      throw NumericError("SgdMomentum: non-finite gradient for parameter '" + name + "'");
    }
    auto [it, inserted] = velocity_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    Matrix& v = it->second;
    v = momentum_ * v + g;
    *param -= lr_ * v;
  }
}

}  // namespace fedst
