#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedst/protocol.hpp"

namespace fedst {

/// Plain-text "key = value" configuration with dotted section paths.
/// '#' starts a comment; blank lines are ignored. Errors name the key.
class KeyValueConfig {
 public:
  static KeyValueConfig fromFile(const std::string& path);
  static KeyValueConfig fromString(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string getString(const std::string& key, const std::string& fallback) const;
  double getDouble(const std::string& key, double fallback) const;
  Index getIndex(const std::string& key, Index fallback) const;
  bool getBool(const std::string& key, bool fallback) const;
  std::vector<double> getDoubleList(const std::string& key,
                                    const std::vector<double>& fallback) const;
  std::vector<Index> getIndexList(const std::string& key,
                                  const std::vector<Index>& fallback) const;

  /// FNV-1a over the raw file text; stamped into every output file.
  std::uint64_t hash() const { return hash_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::uint64_t hash_ = 0;
  std::string origin_;
};

/// Where the experiment's series come from.
struct DataConfig {
  enum class Source { kSynthetic, kCsv };
  Source source = Source::kSynthetic;
  std::string csv_values;
  std::optional<std::string> csv_adjacency;
  std::string preset;  // named Table-of-datasets shape to validate against
  Index synth_nodes_per_cluster = 8;
  Index synth_steps = 672;
  double synth_noise_sd = 0.05;
  bool synth_swap_clusters = false;
  double train_ratio = 0.7;
  double val_ratio = 0.1;
  double test_ratio = 0.2;
};

struct PrivacySimConfig {
  std::vector<double> intensities = {0.0, 0.1, 0.5, 1.0};
  std::vector<double> thresholds = {0.1, 0.25, 0.5};
  Index trend_len = 512;
  Index periods = 2;
};

struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
  CommInputs comm;
  PrivacySimConfig privacy_sim;
  std::vector<Index> sweep_k;  // build-graph edge-count sweep; empty = off
  bool sweep_train = false;    // also train per k and tabulate metrics
  std::string output_dir = "out";
  std::uint64_t config_hash = 0;

  static ExperimentConfig fromFile(const std::string& path);
  static ExperimentConfig fromConfig(const KeyValueConfig& kv);
};

/// Materializes the configured dataset (synthetic recipe or CSV pair).
Dataset loadConfiguredDataset(const ExperimentConfig& cfg);

}  // namespace fedst
