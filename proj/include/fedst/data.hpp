#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedst/graphs.hpp"
#include "fedst/types.hpp"

namespace fedst {

/// A loaded dataset: per-node series (T×D, target in channel 0), optional
/// sensor geometry, and cluster labels when the series are synthetic.
struct Dataset {
  std::string name;
  std::vector<Matrix> values;  // one T×D block per node
  std::optional<StaticGraph> graph;
  double step_minutes = 5.0;
  std::vector<Index> cluster_labels;  // empty unless synthesized

  Index nodes() const { return static_cast<Index>(values.size()); }
  Index steps() const { return values.empty() ? 0 : values.front().rows(); }
  Index features() const { return values.empty() ? 0 : values.front().cols(); }
};

/// Values CSV: header "timestamp,<node>,<node>,...", one row per step. Empty
/// cells are forward-filled (leading gaps take the first seen value) and the
/// fill count is logged. Optional adjacency CSV: header "from,to,distance"
/// with node ids resolved against the values header.
Dataset loadCsv(const std::string& values_path,
                const std::optional<std::string>& graph_path = std::nullopt);

/// Published statistics of the six benchmark datasets; naming one in the
/// configuration pins the expected shape of the ingested files.
struct DatasetPreset {
  std::string name;
  Index nodes = 0;
  Index steps = 0;
  Index edges = -1;  // -1: no geometry (identity static mask)
};

const std::vector<DatasetPreset>& datasetPresets();
std::optional<DatasetPreset> findDatasetPreset(const std::string& name);

/// Rejects a dataset whose shape disagrees with the named preset.
void validateAgainstPreset(const Dataset& ds, const std::string& preset_name);

struct SampleWindow {
  Index node_id = 0;
  Matrix input;   // in_len×D
  Vector target;  // out_len (target channel)
  Index start = 0;
};

struct SampleSet {
  std::vector<SampleWindow> samples;
};

/// Chronological step spans of the three splits: train is [0, train_end),
/// validation [train_end, val_end), test [val_end, test_end).
struct SplitSpans {
  Index train_end = 0;
  Index val_end = 0;
  Index test_end = 0;
};

enum class Split { kTrain, kVal, kTest };

struct SplitWindows {
  SampleSet train, val, test;
  SplitSpans spans;
};

/// Admissible window start steps within [begin, end): the input and target
/// spans must both fit inside the split.
std::vector<Index> windowStarts(Index begin, Index end, Index in_len, Index out_len);

SplitWindows splitAndWindow(const Dataset& ds, double train_ratio, double val_ratio,
                            double test_ratio, Index in_len, Index out_len);

/// Per-node z-score over the target channel, fit on the train span only.
/// Zero variance falls back to std 1 with a warning.
struct Normalizer {
  Vector mean;
  Vector stddev;

  static Normalizer fit(const Dataset& ds, Index train_end);
  double forward(Index node, double v) const { return (v - mean[node]) / stddev[node]; }
  double inverse(Index node, double v) const { return v * stddev[node] + mean[node]; }
};

struct Metrics {
  double mae = 0.0;
  std::optional<double> mape_percent;  // empty when no entry passes the zero guard
  double rmse = 0.0;
};

/// MAE/MAPE/RMSE over flattened entries; MAPE only over |y| > 1e-3.
Metrics computeMetrics(const Vector& y_hat, const Vector& y);
Metrics computeMetrics(const Matrix& y_hat, const Matrix& y);

/// Two groups of nodes with distinct tone periods (24 vs 12 steps) and
/// distinct slow trends, plus Gaussian observation noise. With
/// swap_membership the groups exchange generators in every odd period,
/// exercising per-period graph rebuilds.
Dataset synthTwoCluster(Index n_per_cluster, Index steps, Index periods, double noise_sd,
                        std::uint64_t seed, bool swap_membership = false);

}  // namespace fedst
