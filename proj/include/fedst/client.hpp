#pragma once

#include <string>

#include "fedst/decompose.hpp"
#include "fedst/nn.hpp"
#include "fedst/spectral.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// Per-node model: seasonal GRU encoder, affine combine head over
/// concat(h_i, h_agg_i), and an affine trend projection. The trend head is
/// absent when the decomposition stage is ablated away.
struct ClientParams {
  GruParams encoder;
  Matrix w_head;   // (2·hidden)×horizon
  Matrix b_head;   // 1×horizon
  Matrix w_trend;  // input_len×horizon, empty when !has_trend
  Matrix b_trend;
  bool has_trend = true;

  Index hiddenDim() const { return encoder.hiddenDim(); }
  Index horizon() const { return w_head.cols(); }
  Index inputLen() const { return has_trend ? w_trend.rows() : 0; }
};

ClientParams makeClientParams(Index input_dim, Index hidden, Index gru_layers, Index input_len,
                              Index horizon, bool with_trend, Rng& rng);

ParamRefs paramRefs(ClientParams& p, const std::string& prefix = "cli");

/// One window through the client's upload stage: decomposition, GRU over the
/// seasonal part (target channel; auxiliary channels pass through), and the
/// thresholded spectrum of the trend window.
struct ClientEncoding {
  Matrix h;                       // 1×hidden
  Vector trend_window;            // length input_len
  SparseSpectrum trend_spectrum;  // filtered DFT of the trend window
  GruCache cache;
};

ClientEncoding clientEncode(const Matrix& window, const ClientParams& p,
                            const ThresholdPolicy& mu, Index decomp_window);

/// Batched single-feature encoding used by the trainer: one window per row.
/// With use_decomposition off the encoder sees the raw windows and `trend`
/// stays empty.
struct BatchEncoding {
  Matrix h;      // B×hidden
  Matrix trend;  // B×input_len
  GruCache cache;
};

BatchEncoding encodeWindows(const Matrix& windows, const ClientParams& p, Index decomp_window,
                            bool use_decomposition);

struct Forecast {
  Matrix seasonal_pred;  // B×horizon
  Matrix trend_pred;
  Matrix y_hat;  // seasonal_pred + trend_pred, exactly
};

Forecast clientPredict(const Matrix& h, const Matrix& h_agg, const Matrix& trend,
                       const ClientParams& p);

/// MSE over the forecast horizon plus reverse-mode gradients of the combine
/// head and trend projection. d_h_local is the head's gradient on h_i (the
/// encoder path also receives the server's d_h before gruBackward runs);
/// d_h_agg is the gradient uploaded to the server in the split stage.
struct ClientGrads {
  double loss = 0.0;
  GradBundle head;  // w_head/b_head (+ trend) under the given prefix
  Matrix d_h_local;
  Matrix d_h_agg;
};

ClientGrads clientLossAndGrads(const Forecast& f, const Matrix& y, const Matrix& h,
                               const Matrix& h_agg, const Matrix& trend, const ClientParams& p,
                               const std::string& prefix = "cli");

}  // namespace fedst
