#include "fedst/protocol.hpp"

#include <algorithm>
#include <cmath>

#include "fedst/decompose.hpp"

namespace fedst {

namespace {

constexpr std::uint64_t kNodeSeedStride = 0x9e3779b97f4a7c15ULL;

void writeHeader(ByteWriter& w, Index node, Index round, MessageKind kind,
                 std::uint32_t payload_bytes) {
  w.u32(static_cast<std::uint32_t>(node));
  w.u32(static_cast<std::uint32_t>(round));
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(payload_bytes);
}

std::vector<std::uint8_t> withHeader(Index node, Index round, MessageKind kind,
                                     const ByteWriter& payload) {
  ByteWriter out;
  writeHeader(out, node, round, kind, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> bytes = out.bytes();
  bytes.insert(bytes.end(), payload.bytes().begin(), payload.bytes().end());
  return bytes;
}

std::vector<std::pair<std::string, const Matrix*>> constParamRefs(const ClientParams& p) {
  auto refs = paramRefs(const_cast<ClientParams&>(p), "cli");
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(refs.size());
  for (auto& [name, ptr] : refs) out.emplace_back(name, ptr);
  return out;
}

}  // namespace

std::vector<std::uint8_t> serializeUpload(const UploadMessage& m) {
  ByteWriter payload;
  payload.matrix(m.h);
  payload.u32(static_cast<std::uint32_t>(m.spectra.size()));
  for (const auto& [period, spec] : m.spectra) {
    payload.u32(static_cast<std::uint32_t>(period));
    payload.spectrum(spec);
  }
  return withHeader(m.node_id, m.round, MessageKind::kFeature, payload);
}

std::vector<std::uint8_t> serializeDownload(const DownloadMessage& m) {
  ByteWriter payload;
  payload.matrix(m.h_agg);
  return withHeader(m.node_id, m.round, MessageKind::kAggregated, payload);
}

std::vector<std::uint8_t> serializeGrad(const GradMessage& m) {
  ByteWriter payload;
  payload.u32(static_cast<std::uint32_t>(m.batch_index));
  payload.matrix(m.payload);
  const MessageKind kind = m.direction == GradMessage::Direction::kClientToServer
                               ? MessageKind::kGradToServer
                               : MessageKind::kGradToClient;
  return withHeader(m.node_id, m.round, kind, payload);
}

UploadMessage makeUploadMessage(Index node, Index round, Matrix h,
                                std::vector<std::pair<Index, SparseSpectrum>> spectra) {
  UploadMessage m;
  m.node_id = node;
  m.round = round;
  m.h = std::move(h);
  m.spectra = std::move(spectra);
  m.byte_size = serializeUpload(m).size();
  return m;
}

DownloadMessage makeDownloadMessage(Index node, Index round, Matrix h_agg) {
  DownloadMessage m;
  m.node_id = node;
  m.round = round;
  m.h_agg = std::move(h_agg);
  m.byte_size = serializeDownload(m).size();
  return m;
}

GradMessage makeGradMessage(GradMessage::Direction dir, Index node, Index round,
                            Index batch_index, Matrix payload) {
  GradMessage m;
  m.direction = dir;
  m.node_id = node;
  m.round = round;
  m.batch_index = batch_index;
  m.payload = std::move(payload);
  m.byte_size = serializeGrad(m).size();
  return m;
}

WeightsMessage makeWeightsMessage(MessageKind kind, Index node, Index round,
                                  const ClientParams& params) {
  ByteWriter payload;
  const auto refs = constParamRefs(params);
  payload.u32(static_cast<std::uint32_t>(refs.size()));
  for (const auto& [name, tensor] : refs) {
    payload.str(name);
    payload.matrix(*tensor);
  }
  WeightsMessage m;
  m.node_id = node;
  m.round = round;
  m.kind = kind;
  m.byte_size = withHeader(node, round, kind, payload).size();
  return m;
}

void AblationFlags::normalize() {
  if (no_all_graph) {
    no_static_graph = true;
    no_dynamic_graph = true;
  }
}

std::vector<std::string> AblationFlags::branchNames() const {
  if (no_all_graph || (no_static_graph && no_dynamic_graph)) return {"uniform"};
  if (no_static_graph) return {"dynamic"};
  if (no_dynamic_graph) return {"static"};
  return {"static", "dynamic"};
}

Index TrainConfig::stageARounds() const {
  if (stage_a_rounds > 0) return std::min(stage_a_rounds, rounds);
  return std::max<Index>(rounds / 2, 1);
}

void TrainConfig::validate() const {
  if (rounds < 1) throw ConfigError("train.rounds must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (batches_per_round < 0) throw ConfigError("train.batches_per_round must be nonnegative");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must lie in [0,1)");
  if (input_len < 1 || horizon < 1) throw ConfigError("window lengths must be positive");
  if (decomp_window < 1 || decomp_window % 2 == 0 || decomp_window > input_len) {
    throw ConfigError("model.decomp_window must be odd and at most data.input_len");
  }
  if (hidden < 1 || gru_layers < 1 || server_layers < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (k < 1) throw ConfigError("graph.k must be at least 1");
  if (periods < 1) throw ConfigError("graph.periods must be at least 1");
  if (mu.value < 0.0) throw ConfigError("spectral.mu must be nonnegative");
  if (kappa < 0.0 || kappa >= 1.0) throw ConfigError("graph.kappa must lie in [0,1)");
}

TrainingData prepareTrainingData(const Dataset& ds, double train_ratio, double val_ratio,
                                 double test_ratio) {
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("data.split ratios must sum to 1");
  }
  TrainingData td;
  const Index t = ds.steps();
  td.spans.train_end = static_cast<Index>(std::llround(train_ratio * static_cast<double>(t)));
  td.spans.val_end =
      static_cast<Index>(std::llround((train_ratio + val_ratio) * static_cast<double>(t)));
  td.spans.test_end = t;
  if (td.spans.train_end < 2) throw ConfigError("data.split: train span too small");

  td.norm = Normalizer::fit(ds, td.spans.train_end);
  for (Index node = 0; node < ds.nodes(); ++node) {
    const auto col = ds.values[static_cast<std::size_t>(node)].col(0);
    td.raw.push_back(col);
    Vector normed(t);
    for (Index s = 0; s < t; ++s) normed[s] = td.norm.forward(node, col[s]);
    td.series.push_back(std::move(normed));
  }
  td.geometry = ds.graph;
  td.cluster_labels = ds.cluster_labels;
  return td;
}

ClientParams fedavgMerge(const std::vector<ClientParams>& all) {
  if (all.empty()) throw ConfigError("fedavgMerge: no clients");
  ClientParams merged = all.front();
  auto merged_refs = paramRefs(merged, "cli");
  for (std::size_t c = 1; c < all.size(); ++c) {
    const auto refs = constParamRefs(all[c]);
    if (refs.size() != merged_refs.size()) {
      throw ConfigError("fedavgMerge: parameter inventories differ between clients");
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (refs[i].first != merged_refs[i].first ||
          refs[i].second->rows() != merged_refs[i].second->rows() ||
          refs[i].second->cols() != merged_refs[i].second->cols()) {
        throw ConfigError("fedavgMerge: shape divergence at parameter '" + refs[i].first + "'");
      }
      *merged_refs[i].second += *refs[i].second;
    }
  }
  const double inv = 1.0 / static_cast<double>(all.size());
  for (auto& [name, tensor] : merged_refs) *tensor *= inv;
  return merged;
}

double commAccountingMb(CommStrategy strategy, const CommInputs& in) {
  if (in.nodes < 0 || in.train_steps < 0 || in.weight_mb < 0.0 || in.hidden_mb < 0.0) {
    throw ConfigError("commAccountingMb: negative input");
  }
  const double nodes = static_cast<double>(in.nodes);
  const double steps = static_cast<double>(in.train_steps);
  switch (strategy) {
    case CommStrategy::kMergeParameters:
      return static_cast<double>(in.rounds) * nodes * in.weight_mb;
    case CommStrategy::kMergeVariables:
      return static_cast<double>(in.rounds) * nodes * steps * 4.0 * in.hidden_mb;
    case CommStrategy::kTwoStage:
      return static_cast<double>(in.stage_a_rounds) * nodes * 2.0 * in.weight_mb +
             static_cast<double>(in.stage_b_rounds) * nodes * steps * 3.0 * in.hidden_mb;
  }
  throw ConfigError("commAccountingMb: unknown strategy");
}

CommStrategy commStrategyFromString(const std::string& s) {
  if (s == "merge-parameters") return CommStrategy::kMergeParameters;
  if (s == "merge-variables") return CommStrategy::kMergeVariables;
  if (s == "two-stage") return CommStrategy::kTwoStage;
  throw ConfigError("unknown communication strategy '" + s + "'");
}

GraphBundle buildGraphs(const TrainingData& data, const TrainConfig& cfg) {
  const Index n = data.nodes();
  GraphBundle out;
  out.static_mask =
      data.geometry ? buildStaticMask(*data.geometry, cfg.kappa) : identityMask(n);
  out.schedule.boundaries = evenPeriodBoundaries(data.steps(), cfg.periods);
  if (!cfg.ablation.wantsDynamic() || n < 2) return out;

  std::vector<Rng> spectrum_rngs;
  for (Index node = 0; node < n; ++node) {
    spectrum_rngs.emplace_back((cfg.seed ^ 0x73bc3f4a2a5d1e6bULL) +
                               kNodeSeedStride * static_cast<std::uint64_t>(node + 1));
  }
  out.period_spectra.resize(static_cast<std::size_t>(cfg.periods));
  for (Index p = 0; p < cfg.periods; ++p) {
    const Index begin = out.schedule.boundaries[static_cast<std::size_t>(p)];
    const Index len = out.schedule.boundaries[static_cast<std::size_t>(p) + 1] - begin;
    for (Index node = 0; node < n; ++node) {
      Vector segment = data.series[static_cast<std::size_t>(node)].segment(begin, len);
      if (!cfg.ablation.no_decomposition) {
        segment = decompose(segment, cfg.decomp_window).trend;
      }
      const ComplexVector coef = dft(segment);
      SparseSpectrum spec = sparsifyWithFallback(coef, cfg.mu.resolve(coef));
      if (cfg.noise.target == NoisePolicy::Target::kSpectrum) {
        spec = noiseSpectrum(spec, cfg.noise, spectrum_rngs[static_cast<std::size_t>(node)]);
      }
      out.period_spectra[static_cast<std::size_t>(p)].push_back(std::move(spec));
    }
    out.schedule.masks.push_back(
        buildDynamicMask(distanceMatrix(out.period_spectra[static_cast<std::size_t>(p)]), cfg.k));
  }
  return out;
}

FederatedTrainer::FederatedTrainer(TrainConfig cfg, TrainingData data)
    : cfg_(std::move(cfg)), data_(std::move(data)), server_opt_(cfg_.lr, cfg_.momentum) {
  cfg_.ablation.normalize();
  cfg_.validate();
  const Index n = data_.nodes();
  if (n < 1) throw ConfigError("FederatedTrainer: no nodes");
  if (cfg_.ablation.wantsDynamic() && n > 1 && cfg_.k >= n) {
    throw ConfigError("graph.k must be below the node count");
  }

  train_starts_ = windowStarts(0, data_.spans.train_end, cfg_.input_len, cfg_.horizon);
  if (train_starts_.empty()) throw ConfigError("train split too small for one window");

  Rng rng(cfg_.seed);
  server_ = makeServerParams(cfg_.hidden, cfg_.server_layers, cfg_.ablation.branchNames(), rng);
  const ClientParams tmpl =
      makeClientParams(1, cfg_.hidden, cfg_.gru_layers, cfg_.input_len, cfg_.horizon,
                       !cfg_.ablation.no_decomposition, rng);
  clients_.assign(static_cast<std::size_t>(n), tmpl);
  for (Index i = 0; i < n; ++i) client_opts_.emplace_back(cfg_.lr, cfg_.momentum);
  for (Index i = 0; i < n; ++i) {
    noise_rngs_.emplace_back(cfg_.seed + kNodeSeedStride * static_cast<std::uint64_t>(i + 1));
  }

  GraphBundle graphs = buildGraphs(data_, cfg_);
  static_mask_ = std::move(graphs.static_mask);
  schedule_ = std::move(graphs.schedule);
  period_spectra_ = std::move(graphs.period_spectra);

  const auto names = cfg_.ablation.branchNames();
  branch_masks_.resize(static_cast<std::size_t>(cfg_.periods));
  for (Index p = 0; p < cfg_.periods; ++p) {
    for (const std::string& name : names) {
      if (name == "static") {
        branch_masks_[static_cast<std::size_t>(p)].push_back(static_mask_);
      } else if (name == "dynamic") {
        branch_masks_[static_cast<std::size_t>(p)].push_back(
            n > 1 ? schedule_.masks[static_cast<std::size_t>(p)] : identityMask(1));
      } else {
        branch_masks_[static_cast<std::size_t>(p)].push_back(Matrix::Zero(n, n));
      }
    }
  }
}

Index FederatedTrainer::graphRound() const {
  if (!cfg_.ablation.wantsDynamic()) return 0;
  if (cfg_.mode == TrainMode::kJoint) return 1;
  return cfg_.stageARounds() < cfg_.rounds ? cfg_.stageARounds() + 1 : 0;
}

std::vector<std::vector<Index>> FederatedTrainer::batchedStarts(const std::vector<Index>& starts,
                                                                Index batch_size,
                                                                std::uint64_t seed, Index round,
                                                                Index max_batches) {
  std::vector<Index> order = starts;
  Rng rng(seed + kNodeSeedStride * static_cast<std::uint64_t>(round));
  for (std::size_t i = order.size(); i > 1; --i) {  // Fisher–Yates, fully specified
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<Index>> batches;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    if (max_batches > 0 && static_cast<Index>(batches.size()) >= max_batches) break;
  }
  return batches;
}

Matrix FederatedTrainer::windowsFor(Index node, const std::vector<Index>& starts) const {
  Matrix w(static_cast<Index>(starts.size()), cfg_.input_len);
  const Vector& series = data_.series[static_cast<std::size_t>(node)];
  for (std::size_t b = 0; b < starts.size(); ++b) {
    w.row(static_cast<Index>(b)) = series.segment(starts[b], cfg_.input_len).transpose();
  }
  return w;
}

Matrix FederatedTrainer::targetsFor(Index node, const std::vector<Index>& starts) const {
  Matrix y(static_cast<Index>(starts.size()), cfg_.horizon);
  const Vector& series = data_.series[static_cast<std::size_t>(node)];
  for (std::size_t b = 0; b < starts.size(); ++b) {
    y.row(static_cast<Index>(b)) =
        series.segment(starts[b] + cfg_.input_len, cfg_.horizon).transpose();
  }
  return y;
}

std::vector<std::pair<Index, SparseSpectrum>> FederatedTrainer::boundarySpectra(
    Index node, Index round) const {
  std::vector<std::pair<Index, SparseSpectrum>> out;
  if (round != graphRound() || period_spectra_.empty()) return out;
  for (Index p = 0; p < static_cast<Index>(period_spectra_.size()); ++p) {
    out.emplace_back(p, period_spectra_[static_cast<std::size_t>(p)][static_cast<std::size_t>(node)]);
  }
  return out;
}

FederatedTrainer::BatchResult FederatedTrainer::jointBatch(Index round, Index batch_index,
                                                           const std::vector<Index>& starts) {
  const Index n = data_.nodes();
  const Index B = static_cast<Index>(starts.size());
  BatchResult res;

  // Client encode + feature upload.
  std::vector<BatchEncoding> enc(static_cast<std::size_t>(n));
  std::vector<Matrix> h_up(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    enc[static_cast<std::size_t>(i)] =
        encodeWindows(windowsFor(i, starts), clients_[static_cast<std::size_t>(i)],
                      cfg_.decomp_window, !cfg_.ablation.no_decomposition);
    Matrix h = enc[static_cast<std::size_t>(i)].h;
    if (cfg_.noise.target == NoisePolicy::Target::kHidden) {
      h = noiseHidden(h, cfg_.noise, noise_rngs_[static_cast<std::size_t>(i)]);
    }
    h_up[static_cast<std::size_t>(i)] = h;
    res.up += makeUploadMessage(i, round, std::move(h),
                                batch_index == 0 ? boundarySpectra(i, round)
                                                 : std::vector<std::pair<Index, SparseSpectrum>>{})
                  .byte_size;
  }

  // Server aggregation per sample window.
  std::vector<ServerCache> caches(static_cast<std::size_t>(B));
  std::vector<Matrix> h_agg(static_cast<std::size_t>(n), Matrix(B, cfg_.hidden));
  for (Index b = 0; b < B; ++b) {
    Matrix stacked(n, cfg_.hidden);
    for (Index i = 0; i < n; ++i) stacked.row(i) = h_up[static_cast<std::size_t>(i)].row(b);
    const Index period = schedule_.periodOf(starts[static_cast<std::size_t>(b)]);
    auto [agg, cache] =
        serverForward(stacked, branch_masks_[static_cast<std::size_t>(period)], server_);
    caches[static_cast<std::size_t>(b)] = std::move(cache);
    for (Index i = 0; i < n; ++i) h_agg[static_cast<std::size_t>(i)].row(b) = agg.row(i);
  }
  for (Index i = 0; i < n; ++i) {
    res.down += makeDownloadMessage(i, round, h_agg[static_cast<std::size_t>(i)]).byte_size;
  }

  // Client losses and the gradients that flow back to the server.
  std::vector<ClientGrads> grads(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& e = enc[static_cast<std::size_t>(i)];
    const Matrix& agg = h_agg[static_cast<std::size_t>(i)];
    const Forecast f = clientPredict(e.h, agg, e.trend, clients_[static_cast<std::size_t>(i)]);
    try {
      grads[static_cast<std::size_t>(i)] = clientLossAndGrads(
          f, targetsFor(i, starts), e.h, agg, e.trend, clients_[static_cast<std::size_t>(i)]);
    } catch (const NumericError& err) {
      throw NumericError("node " + std::to_string(i) + ": " + err.what());
    }
    res.loss += grads[static_cast<std::size_t>(i)].loss;
    res.up += makeGradMessage(GradMessage::Direction::kClientToServer, i, round, batch_index,
                              grads[static_cast<std::size_t>(i)].d_h_agg)
                  .byte_size;
  }
  res.loss /= static_cast<double>(n);

  // Server backward over the batch, then its optimizer step.
  GradBundle server_grads;
  std::vector<Matrix> d_h_server(static_cast<std::size_t>(n), Matrix(B, cfg_.hidden));
  for (Index b = 0; b < B; ++b) {
    Matrix d_agg(n, cfg_.hidden);
    for (Index i = 0; i < n; ++i) {
      d_agg.row(i) = grads[static_cast<std::size_t>(i)].d_h_agg.row(b);
    }
    auto [g, d_h] = serverBackward(caches[static_cast<std::size_t>(b)], server_, d_agg);
    server_grads.merge(g);
    for (Index i = 0; i < n; ++i) d_h_server[static_cast<std::size_t>(i)].row(b) = d_h.row(i);
  }
  server_opt_.step(paramRefs(server_), server_grads);

  // Gradient download and the client-side step.
  for (Index i = 0; i < n; ++i) {
    res.down += makeGradMessage(GradMessage::Direction::kServerToClient, i, round, batch_index,
                                d_h_server[static_cast<std::size_t>(i)])
                    .byte_size;
    auto& cg = grads[static_cast<std::size_t>(i)];
    const Matrix d_h_total = cg.d_h_local + d_h_server[static_cast<std::size_t>(i)];
    GradBundle all = gruBackward(enc[static_cast<std::size_t>(i)].cache,
                                 clients_[static_cast<std::size_t>(i)].encoder, d_h_total,
                                 "cli.enc");
    all.merge(cg.head);
    client_opts_[static_cast<std::size_t>(i)].step(
        paramRefs(clients_[static_cast<std::size_t>(i)], "cli"), all);
  }
  return res;
}

RoundReport FederatedTrainer::runJointRound(Index round) {
  const auto batches = batchedStarts(train_starts_, cfg_.batch_size, cfg_.seed, round,
                                     cfg_.batches_per_round);
  RoundReport report;
  report.round = round;
  report.stage = 'J';
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchResult r = jointBatch(round, static_cast<Index>(b), batches[b]);
    report.mean_train_loss += r.loss;
    report.up_bytes += r.up;
    report.down_bytes += r.down;
  }
  report.mean_train_loss /= static_cast<double>(batches.size());
  return report;
}

RoundReport FederatedTrainer::runStageARound(Index round) {
  const Index n = data_.nodes();
  const auto batches = batchedStarts(train_starts_, cfg_.batch_size, cfg_.seed, round,
                                     cfg_.batches_per_round);
  RoundReport report;
  report.round = round;
  report.stage = 'A';
  for (const auto& starts : batches) {
    const Index B = static_cast<Index>(starts.size());
    const Matrix zero_agg = Matrix::Zero(B, cfg_.hidden);
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      ClientParams& params = clients_[static_cast<std::size_t>(i)];
      BatchEncoding e = encodeWindows(windowsFor(i, starts), params, cfg_.decomp_window,
                                      !cfg_.ablation.no_decomposition);
      const Forecast f = clientPredict(e.h, zero_agg, e.trend, params);
      ClientGrads cg;
      try {
        cg = clientLossAndGrads(f, targetsFor(i, starts), e.h, zero_agg, e.trend, params);
      } catch (const NumericError& err) {
        throw NumericError("node " + std::to_string(i) + ": " + err.what());
      }
      GradBundle all = gruBackward(e.cache, params.encoder, cg.d_h_local, "cli.enc");
      all.merge(cg.head);
      client_opts_[static_cast<std::size_t>(i)].step(paramRefs(params, "cli"), all);
      loss += cg.loss;
    }
    report.mean_train_loss += loss / static_cast<double>(n);
  }
  report.mean_train_loss /= static_cast<double>(batches.size());

  // Round-end weight averaging: everyone uploads, the mean is re-broadcast.
  for (Index i = 0; i < n; ++i) {
    report.up_bytes += makeWeightsMessage(MessageKind::kWeights, i, round,
                                          clients_[static_cast<std::size_t>(i)])
                           .byte_size;
  }
  const ClientParams merged = fedavgMerge(clients_);
  for (Index i = 0; i < n; ++i) {
    report.down_bytes +=
        makeWeightsMessage(MessageKind::kMergedWeights, i, round, merged).byte_size;
    clients_[static_cast<std::size_t>(i)] = merged;
  }
  return report;
}

FederatedTrainer::BatchResult FederatedTrainer::stageBBatch(Index round, Index batch_index,
                                                            const std::vector<Index>& starts) {
  const Index n = data_.nodes();
  const Index B = static_cast<Index>(starts.size());
  BatchResult res;

  std::vector<BatchEncoding> enc(static_cast<std::size_t>(n));
  std::vector<Matrix> h_up(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    enc[static_cast<std::size_t>(i)] =
        encodeWindows(windowsFor(i, starts), clients_[static_cast<std::size_t>(i)],
                      cfg_.decomp_window, !cfg_.ablation.no_decomposition);
    Matrix h = enc[static_cast<std::size_t>(i)].h;
    if (cfg_.noise.target == NoisePolicy::Target::kHidden) {
      h = noiseHidden(h, cfg_.noise, noise_rngs_[static_cast<std::size_t>(i)]);
    }
    h_up[static_cast<std::size_t>(i)] = h;
    res.up += makeUploadMessage(i, round, std::move(h),
                                batch_index == 0 ? boundarySpectra(i, round)
                                                 : std::vector<std::pair<Index, SparseSpectrum>>{})
                  .byte_size;
  }

  std::vector<ServerCache> caches(static_cast<std::size_t>(B));
  std::vector<Matrix> h_agg(static_cast<std::size_t>(n), Matrix(B, cfg_.hidden));
  for (Index b = 0; b < B; ++b) {
    Matrix stacked(n, cfg_.hidden);
    for (Index i = 0; i < n; ++i) stacked.row(i) = h_up[static_cast<std::size_t>(i)].row(b);
    const Index period = schedule_.periodOf(starts[static_cast<std::size_t>(b)]);
    auto [agg, cache] =
        serverForward(stacked, branch_masks_[static_cast<std::size_t>(period)], server_);
    caches[static_cast<std::size_t>(b)] = std::move(cache);
    for (Index i = 0; i < n; ++i) h_agg[static_cast<std::size_t>(i)].row(b) = agg.row(i);
  }
  for (Index i = 0; i < n; ++i) {
    res.down += makeDownloadMessage(i, round, h_agg[static_cast<std::size_t>(i)]).byte_size;
  }

  // Clients stay frozen: only the loss and d_h_agg leave the node.
  std::vector<ClientGrads> grads(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& e = enc[static_cast<std::size_t>(i)];
    const Matrix& agg = h_agg[static_cast<std::size_t>(i)];
    const Forecast f = clientPredict(e.h, agg, e.trend, clients_[static_cast<std::size_t>(i)]);
    try {
      grads[static_cast<std::size_t>(i)] = clientLossAndGrads(
          f, targetsFor(i, starts), e.h, agg, e.trend, clients_[static_cast<std::size_t>(i)]);
    } catch (const NumericError& err) {
      throw NumericError("node " + std::to_string(i) + ": " + err.what());
    }
    res.loss += grads[static_cast<std::size_t>(i)].loss;
    res.up += makeGradMessage(GradMessage::Direction::kClientToServer, i, round, batch_index,
                              grads[static_cast<std::size_t>(i)].d_h_agg)
                  .byte_size;
  }
  res.loss /= static_cast<double>(n);

  GradBundle server_grads;
  for (Index b = 0; b < B; ++b) {
    Matrix d_agg(n, cfg_.hidden);
    for (Index i = 0; i < n; ++i) {
      d_agg.row(i) = grads[static_cast<std::size_t>(i)].d_h_agg.row(b);
    }
    auto [g, d_h] = serverBackward(caches[static_cast<std::size_t>(b)], server_, d_agg);
    server_grads.merge(g);
  }
  server_opt_.step(paramRefs(server_), server_grads);
  return res;
}

RoundReport FederatedTrainer::runStageBRound(Index round) {
  const auto batches = batchedStarts(train_starts_, cfg_.batch_size, cfg_.seed, round,
                                     cfg_.batches_per_round);
  RoundReport report;
  report.round = round;
  report.stage = 'B';
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchResult r = stageBBatch(round, static_cast<Index>(b), batches[b]);
    report.mean_train_loss += r.loss;
    report.up_bytes += r.up;
    report.down_bytes += r.down;
  }
  report.mean_train_loss /= static_cast<double>(batches.size());
  return report;
}

std::vector<RoundReport> FederatedTrainer::run() {
  std::vector<RoundReport> reports;
  if (cfg_.mode == TrainMode::kJoint) {
    for (Index r = 1; r <= cfg_.rounds; ++r) reports.push_back(runJointRound(r));
    return reports;
  }
  const Index stage_a = cfg_.stageARounds();
  for (Index r = 1; r <= stage_a; ++r) reports.push_back(runStageARound(r));
  for (Index r = stage_a + 1; r <= cfg_.rounds; ++r) reports.push_back(runStageBRound(r));
  return reports;
}

Metrics FederatedTrainer::evaluate(Split split) {
  const Index n = data_.nodes();
  Index begin = 0, end = 0;
  switch (split) {
    case Split::kTrain: begin = 0; end = data_.spans.train_end; break;
    case Split::kVal: begin = data_.spans.train_end; end = data_.spans.val_end; break;
    case Split::kTest: begin = data_.spans.val_end; end = data_.spans.test_end; break;
  }
  const std::vector<Index> starts = windowStarts(begin, end, cfg_.input_len, cfg_.horizon);
  if (starts.empty()) throw ConfigError("evaluate: split has no complete window");

  std::vector<double> preds, truths;
  preds.reserve(starts.size() * static_cast<std::size_t>(n * cfg_.horizon));
  truths.reserve(preds.capacity());

  for (std::size_t pos = 0; pos < starts.size(); pos += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t stop = std::min(starts.size(), pos + static_cast<std::size_t>(cfg_.batch_size));
    const std::vector<Index> chunk(starts.begin() + static_cast<std::ptrdiff_t>(pos),
                                   starts.begin() + static_cast<std::ptrdiff_t>(stop));
    const Index B = static_cast<Index>(chunk.size());

    std::vector<BatchEncoding> enc(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      enc[static_cast<std::size_t>(i)] =
          encodeWindows(windowsFor(i, chunk), clients_[static_cast<std::size_t>(i)],
                        cfg_.decomp_window, !cfg_.ablation.no_decomposition);
    }
    std::vector<Matrix> h_agg(static_cast<std::size_t>(n), Matrix(B, cfg_.hidden));
    for (Index b = 0; b < B; ++b) {
      Matrix stacked(n, cfg_.hidden);
      for (Index i = 0; i < n; ++i) stacked.row(i) = enc[static_cast<std::size_t>(i)].h.row(b);
      const Index period = schedule_.periodOf(chunk[static_cast<std::size_t>(b)]);
      auto [agg, cache] =
          serverForward(stacked, branch_masks_[static_cast<std::size_t>(period)], server_);
      for (Index i = 0; i < n; ++i) h_agg[static_cast<std::size_t>(i)].row(b) = agg.row(i);
    }
    for (Index i = 0; i < n; ++i) {
      const auto& e = enc[static_cast<std::size_t>(i)];
      const Forecast f = clientPredict(e.h, h_agg[static_cast<std::size_t>(i)], e.trend,
                                       clients_[static_cast<std::size_t>(i)]);
      const Vector& raw = data_.raw[static_cast<std::size_t>(i)];
      for (Index b = 0; b < B; ++b) {
        for (Index s = 0; s < cfg_.horizon; ++s) {
          preds.push_back(data_.norm.inverse(i, f.y_hat(b, s)));
          truths.push_back(raw[chunk[static_cast<std::size_t>(b)] + cfg_.input_len + s]);
        }
      }
    }
  }

  Vector vp(static_cast<Index>(preds.size())), vt(static_cast<Index>(truths.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    vp[static_cast<Index>(i)] = preds[i];
    vt[static_cast<Index>(i)] = truths[i];
  }
  return computeMetrics(vp, vt);
}

}  // namespace fedst
