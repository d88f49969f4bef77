#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedst/client.hpp"
#include "fedst/data.hpp"
#include "fedst/graphs.hpp"
#include "fedst/privacy.hpp"
#include "fedst/serialize.hpp"
#include "fedst/server.hpp"

namespace fedst {

// ---------------------------------------------------------------------------
// Wire messages. Each serializes to a 16-byte header (node_id, round, kind,
// payload length; u32 little-endian each) followed by 64-bit payloads;
// byte_size is always the exact serialized length.
// ---------------------------------------------------------------------------

enum class MessageKind : std::uint32_t {
  kFeature = 1,
  kAggregated = 2,
  kGradToServer = 3,
  kGradToClient = 4,
  kWeights = 5,
  kMergedWeights = 6,
};

struct UploadMessage {
  Index node_id = 0;
  Index round = 0;
  Matrix h;  // B×hidden
  std::vector<std::pair<Index, SparseSpectrum>> spectra;  // (period, spectrum), boundary rounds only
  std::size_t byte_size = 0;
};

struct DownloadMessage {
  Index node_id = 0;
  Index round = 0;
  Matrix h_agg;
  std::size_t byte_size = 0;
};

struct GradMessage {
  enum class Direction { kClientToServer, kServerToClient };
  Direction direction = Direction::kClientToServer;
  Index node_id = 0;
  Index round = 0;
  Index batch_index = 0;
  Matrix payload;
  std::size_t byte_size = 0;
};

struct WeightsMessage {
  Index node_id = 0;
  Index round = 0;
  MessageKind kind = MessageKind::kWeights;
  std::size_t byte_size = 0;
};

std::vector<std::uint8_t> serializeUpload(const UploadMessage& m);
std::vector<std::uint8_t> serializeDownload(const DownloadMessage& m);
std::vector<std::uint8_t> serializeGrad(const GradMessage& m);

UploadMessage makeUploadMessage(Index node, Index round, Matrix h,
                                std::vector<std::pair<Index, SparseSpectrum>> spectra = {});
DownloadMessage makeDownloadMessage(Index node, Index round, Matrix h_agg);
GradMessage makeGradMessage(GradMessage::Direction dir, Index node, Index round,
                            Index batch_index, Matrix payload);
WeightsMessage makeWeightsMessage(MessageKind kind, Index node, Index round,
                                  const ClientParams& params);

struct RoundReport {
  Index round = 0;
  char stage = 'J';  // 'J' joint, 'A'/'B' two-stage
  double mean_train_loss = 0.0;
  std::uint64_t up_bytes = 0;
  std::uint64_t down_bytes = 0;
};

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

enum class TrainMode { kJoint, kTwoStage };

/// Table-4 style component toggles. no_all_graph subsumes the two graph
/// flags: both branches are replaced by a single attention branch under an
/// all-zero (uniform) mask.
struct AblationFlags {
  bool no_decomposition = false;
  bool no_static_graph = false;
  bool no_dynamic_graph = false;
  bool no_all_graph = false;

  void normalize();
  bool wantsDynamic() const { return !no_dynamic_graph && !no_all_graph; }
  std::vector<std::string> branchNames() const;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kTwoStage;
  Index rounds = 100;
  Index stage_a_rounds = 0;  // 0 → rounds/2
  Index batch_size = 32;
  Index batches_per_round = 0;  // 0 → full pass over the train windows
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  Index k = 32;
  ThresholdPolicy mu;
  Index periods = 4;
  Index hidden = 100;
  Index gru_layers = 2;
  Index server_layers = 2;
  Index decomp_window = 5;
  Index input_len = 12;
  Index horizon = 12;
  double kappa = 0.1;
  AblationFlags ablation;
  NoisePolicy noise;

  Index stageARounds() const;
  void validate() const;
};

/// Normalized per-node series plus everything the trainer needs to slice
/// windows and undo normalization for metrics.
struct TrainingData {
  std::vector<Vector> series;  // normalized target channel, full length
  std::vector<Vector> raw;     // raw target channel
  Normalizer norm;
  SplitSpans spans;
  std::optional<StaticGraph> geometry;
  std::vector<Index> cluster_labels;

  Index nodes() const { return static_cast<Index>(series.size()); }
  Index steps() const { return series.empty() ? 0 : series.front().size(); }
};

TrainingData prepareTrainingData(const Dataset& ds, double train_ratio, double val_ratio,
                                 double test_ratio);

/// Masks and per-period trend spectra for a prepared dataset. The static mask
/// falls back to the identity pattern without geometry; dynamic masks are
/// skipped when the ablation removes that branch (or with a single node).
/// Spectrum noise, when configured, is applied before mask construction with
/// per-node seeded generators.
struct GraphBundle {
  AttentionMask static_mask;
  DynamicGraphSchedule schedule;  // boundaries always set; masks empty if unused
  std::vector<std::vector<SparseSpectrum>> period_spectra;  // [period][node]
};

GraphBundle buildGraphs(const TrainingData& data, const TrainConfig& cfg);

/// Elementwise unweighted mean of identically shaped client parameter sets.
ClientParams fedavgMerge(const std::vector<ClientParams>& all);

// ---------------------------------------------------------------------------
// Communication accounting (Table-3 style analytical calculator)
// ---------------------------------------------------------------------------

enum class CommStrategy { kMergeParameters, kMergeVariables, kTwoStage };

struct CommInputs {
  Index nodes = 307;
  double weight_mb = 1.15;
  double hidden_mb = 0.024;  // per node per exchange
  Index train_steps = 11872;
  Index rounds = 1;          // merge-parameters / merge-variables rounds
  Index stage_a_rounds = 1;  // two-stage
  Index stage_b_rounds = 1;
};

/// Documented formulas (per-node message payloads):
///   merge-parameters: rounds · nodes · weight_mb            (model upload)
///   merge-variables:  rounds · nodes · train_steps · 4 · hidden_mb
///                     (feature up/down + gradient up/down per batch)
///   two-stage:        stage_a_rounds · nodes · 2 · weight_mb
///                     + stage_b_rounds · nodes · train_steps · 3 · hidden_mb
///                     (stage B drops the gradient download)
double commAccountingMb(CommStrategy strategy, const CommInputs& in);

CommStrategy commStrategyFromString(const std::string& s);

// ---------------------------------------------------------------------------
// Round-synchronous simulator
// ---------------------------------------------------------------------------

/// Owns the clients, the server, the masks, and the per-period spectra.
/// Initialization order is part of the reproducibility contract:
/// Rng(seed) → makeServerParams → makeClientParams (template copied to every
/// client). Batches are formed by batchedStarts; rounds are numbered from 1.
class FederatedTrainer {
 public:
  FederatedTrainer(TrainConfig cfg, TrainingData data);

  std::vector<RoundReport> run();
  RoundReport runJointRound(Index round);
  RoundReport runStageARound(Index round);
  RoundReport runStageBRound(Index round);

  /// Denormalized forecasting metrics over every window of a split.
  Metrics evaluate(Split split);

  /// Deterministic Fisher–Yates shuffle + chunking, shared with test oracles.
  static std::vector<std::vector<Index>> batchedStarts(const std::vector<Index>& starts,
                                                       Index batch_size, std::uint64_t seed,
                                                       Index round, Index max_batches);

  const std::vector<ClientParams>& clients() const { return clients_; }
  std::vector<ClientParams>& clientsMutable() { return clients_; }
  const ServerParams& server() const { return server_; }
  ServerParams& serverMutable() { return server_; }
  const AttentionMask& staticMask() const { return static_mask_; }
  const DynamicGraphSchedule& schedule() const { return schedule_; }
  const std::vector<std::vector<SparseSpectrum>>& periodSpectra() const {
    return period_spectra_;
  }
  const TrainConfig& config() const { return cfg_; }
  const TrainingData& data() const { return data_; }
  const std::vector<Index>& trainStarts() const { return train_starts_; }

  /// First round whose uploads carry the period spectra (the graph-building
  /// round): 1 in joint mode, the first stage-B round in two-stage mode.
  Index graphRound() const;

 private:
  struct BatchResult {
    double loss = 0.0;
    std::uint64_t up = 0;
    std::uint64_t down = 0;
  };

  Matrix windowsFor(Index node, const std::vector<Index>& starts) const;
  Matrix targetsFor(Index node, const std::vector<Index>& starts) const;
  std::vector<std::pair<Index, SparseSpectrum>> boundarySpectra(Index node, Index round) const;
  BatchResult jointBatch(Index round, Index batch_index, const std::vector<Index>& starts);
  BatchResult stageBBatch(Index round, Index batch_index, const std::vector<Index>& starts);

  TrainConfig cfg_;
  TrainingData data_;
  std::vector<ClientParams> clients_;
  std::vector<SgdMomentum> client_opts_;
  ServerParams server_;
  SgdMomentum server_opt_;
  AttentionMask static_mask_;
  DynamicGraphSchedule schedule_;  // boundaries always set; masks empty if unused
  std::vector<std::vector<SparseSpectrum>> period_spectra_;  // [period][node]
  std::vector<std::vector<AttentionMask>> branch_masks_;     // [period][branch]
  std::vector<Rng> noise_rngs_;  // one per client
  std::vector<Index> train_starts_;
};

}  // namespace fedst
