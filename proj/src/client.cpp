#include "fedst/client.hpp"

#include <cmath>

namespace fedst {

ClientParams makeClientParams(Index input_dim, Index hidden, Index gru_layers, Index input_len,
                              Index horizon, bool with_trend, Rng& rng) {
  ClientParams p;
  p.encoder = makeGruParams(input_dim, hidden, gru_layers, rng);
  p.w_head = uniformInit(2 * hidden, horizon, 2 * hidden, rng);
  p.b_head = Matrix::Zero(1, horizon);
  p.has_trend = with_trend;
  if (with_trend) {
    p.w_trend = uniformInit(input_len, horizon, input_len, rng);
    p.b_trend = Matrix::Zero(1, horizon);
  }
  return p;
}

ParamRefs paramRefs(ClientParams& p, const std::string& prefix) {
  ParamRefs refs = paramRefs(p.encoder, prefix + ".enc");
  refs.emplace_back(prefix + ".head.w", &p.w_head);
  refs.emplace_back(prefix + ".head.b", &p.b_head);
  if (p.has_trend) {
    refs.emplace_back(prefix + ".trend.w", &p.w_trend);
    refs.emplace_back(prefix + ".trend.b", &p.b_trend);
  }
  return refs;
}

ClientEncoding clientEncode(const Matrix& window, const ClientParams& p,
                            const ThresholdPolicy& mu, Index decomp_window) {
  if (window.cols() != p.encoder.inputDim()) {
    throw DimensionError("clientEncode: window is " + shapeStr(window.rows(), window.cols()) +
                         " but encoder expects " + std::to_string(p.encoder.inputDim()) +
                         " features");
  }
  const DecomposedWindow dec = decompose(window.col(0), decomp_window);

  Matrix enc_in = window;
  enc_in.col(0) = dec.seasonal;  // auxiliary channels pass through undecomposed

  ClientEncoding out;
  const Matrix h0 = Matrix::Zero(p.encoder.layerCount(), p.encoder.hiddenDim());
  auto [h, cache] = gruSequenceForward(enc_in, p.encoder, h0);
  out.h = std::move(h);
  out.cache = std::move(cache);
  out.trend_window = dec.trend;
  const ComplexVector coef = dft(dec.trend);
  out.trend_spectrum = sparsifyWithFallback(coef, mu.resolve(coef));
  return out;
}

BatchEncoding encodeWindows(const Matrix& windows, const ClientParams& p, Index decomp_window,
                            bool use_decomposition) {
  if (p.encoder.inputDim() != 1) {
    throw ConfigError("encodeWindows: batched path expects a single-feature encoder");
  }
  const Index batch = windows.rows();
  const Index len = windows.cols();

  BatchEncoding out;
  Matrix seasonal(batch, len);
  if (use_decomposition) {
    out.trend.resize(batch, len);
    for (Index b = 0; b < batch; ++b) {
      const DecomposedWindow dec = decompose(windows.row(b).transpose(), decomp_window);
      out.trend.row(b) = dec.trend.transpose();
      seasonal.row(b) = dec.seasonal.transpose();
    }
  } else {
    seasonal = windows;
  }

  std::vector<Matrix> xs;
  xs.reserve(static_cast<std::size_t>(len));
  for (Index t = 0; t < len; ++t) xs.push_back(seasonal.col(t));
  std::vector<Matrix> h0(static_cast<std::size_t>(p.encoder.layerCount()),
                         Matrix::Zero(batch, p.encoder.hiddenDim()));
  auto [h, cache] = gruForwardBatched(xs, p.encoder, h0);
  out.h = std::move(h);
  out.cache = std::move(cache);
  return out;
}

Forecast clientPredict(const Matrix& h, const Matrix& h_agg, const Matrix& trend,
                       const ClientParams& p) {
  if (h.rows() != h_agg.rows() || h.cols() != h_agg.cols()) {
    throw DimensionError("clientPredict: h is " + shapeStr(h.rows(), h.cols()) +
                         " but h_agg is " + shapeStr(h_agg.rows(), h_agg.cols()));
  }
  Matrix concat(h.rows(), h.cols() + h_agg.cols());
  concat << h, h_agg;

  Forecast f;
  f.seasonal_pred = linearForward(concat, p.w_head, p.b_head);
  if (p.has_trend) {
    f.trend_pred = linearForward(trend, p.w_trend, p.b_trend);
  } else {
    f.trend_pred = Matrix::Zero(f.seasonal_pred.rows(), f.seasonal_pred.cols());
  }
  f.y_hat = f.seasonal_pred + f.trend_pred;
  return f;
}

ClientGrads clientLossAndGrads(const Forecast& f, const Matrix& y, const Matrix& h,
                               const Matrix& h_agg, const Matrix& trend, const ClientParams& p,
                               const std::string& prefix) {
  if (f.y_hat.rows() != y.rows() || f.y_hat.cols() != y.cols()) {
    throw DimensionError("clientLossAndGrads: forecast is " +
                         shapeStr(f.y_hat.rows(), f.y_hat.cols()) + " but target is " +
                         shapeStr(y.rows(), y.cols()));
  }
  const double count = static_cast<double>(y.rows() * y.cols());
  const Matrix err = f.y_hat - y;

  ClientGrads out;
  out.loss = err.squaredNorm() / count;
  if (!std::isfinite(out.loss)) throw NumericError("clientLossAndGrads: non-finite loss");

  const Matrix d_y = (2.0 / count) * err;  // flows equally into both prediction parts

  Matrix concat(h.rows(), h.cols() + h_agg.cols());
  concat << h, h_agg;
  const LinearGrads hg = linearBackward(concat, p.w_head, d_y);
  out.head.add(prefix + ".head.w", hg.dw);
  out.head.add(prefix + ".head.b", hg.db);
  out.d_h_local = hg.dx.leftCols(h.cols());
  out.d_h_agg = hg.dx.rightCols(h_agg.cols());

  if (p.has_trend) {
    const LinearGrads tg = linearBackward(trend, p.w_trend, d_y);
    out.head.add(prefix + ".trend.w", tg.dw);
    out.head.add(prefix + ".trend.b", tg.db);
  }
  return out;
}

}  // namespace fedst
