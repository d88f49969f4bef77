#include "fedst/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedst/error.hpp"
#include "fedst/serialize.hpp"

namespace fedst {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> splitList(const std::string& s) {
  std::vector<std::string> parts;
  std::string cell;
  std::stringstream ss(s);
  while (std::getline(ss, cell, ',')) {
    const std::string t = trim(cell);
    if (!t.empty()) parts.push_back(t);
  }
  return parts;
}

}  // namespace

KeyValueConfig KeyValueConfig::fromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return fromString(buf.str(), path);
}

KeyValueConfig KeyValueConfig::fromString(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.hash_ = fnv1a(text);
  cfg.origin_ = origin;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string KeyValueConfig::getString(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::getDouble(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + it->second + "'");
  }
}

Index KeyValueConfig::getIndex(const std::string& key, Index fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing text");
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
  }
}

bool KeyValueConfig::getBool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "on") return true;
  if (it->second == "false" || it->second == "0" || it->second == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
}

std::vector<double> KeyValueConfig::getDoubleList(const std::string& key,
                                                  const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const std::string& part : splitList(it->second)) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated number list");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<Index> KeyValueConfig::getIndexList(const std::string& key,
                                                const std::vector<Index>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<Index> out;
  for (const std::string& part : splitList(it->second)) {
    try {
      out.push_back(static_cast<Index>(std::stoll(part)));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a comma-separated integer list");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

ExperimentConfig ExperimentConfig::fromFile(const std::string& path) {
  return fromConfig(KeyValueConfig::fromFile(path));
}

ExperimentConfig ExperimentConfig::fromConfig(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.config_hash = kv.hash();

  const std::string source = kv.getString("data.source", "synthetic");
  if (source == "synthetic") {
    cfg.data.source = DataConfig::Source::kSynthetic;
  } else if (source == "csv") {
    cfg.data.source = DataConfig::Source::kCsv;
    cfg.data.csv_values = kv.getString("data.csv.values", "");
    if (cfg.data.csv_values.empty()) {
      throw ConfigError("data.csv.values: required when data.source = csv");
    }
    const std::string adj = kv.getString("data.csv.adjacency", "");
    if (!adj.empty()) cfg.data.csv_adjacency = adj;
  } else {
    throw ConfigError("data.source: expected 'synthetic' or 'csv', got '" + source + "'");
  }
  cfg.data.preset = kv.getString("data.preset", "");
  if (!cfg.data.preset.empty() && !findDatasetPreset(cfg.data.preset)) {
    throw ConfigError("data.preset: unknown preset '" + cfg.data.preset + "'");
  }
  cfg.data.synth_nodes_per_cluster = kv.getIndex("data.synth.nodes_per_cluster", 8);
  cfg.data.synth_steps = kv.getIndex("data.synth.steps", 672);
  cfg.data.synth_noise_sd = kv.getDouble("data.synth.noise_sd", 0.05);
  cfg.data.synth_swap_clusters = kv.getBool("data.synth.swap_clusters", false);
  cfg.data.train_ratio = kv.getDouble("data.split.train", 0.7);
  cfg.data.val_ratio = kv.getDouble("data.split.val", 0.1);
  cfg.data.test_ratio = kv.getDouble("data.split.test", 0.2);

  TrainConfig& t = cfg.train;
  const std::string mode = kv.getString("train.mode", "two_stage");
  if (mode == "joint") {
    t.mode = TrainMode::kJoint;
  } else if (mode == "two_stage") {
    t.mode = TrainMode::kTwoStage;
  } else {
    throw ConfigError("train.mode: expected 'joint' or 'two_stage', got '" + mode + "'");
  }
  t.rounds = kv.getIndex("train.rounds", 100);
  t.stage_a_rounds = kv.getIndex("train.stage_a_rounds", 0);
  t.batch_size = kv.getIndex("train.batch_size", 32);
  t.batches_per_round = kv.getIndex("train.batches_per_round", 0);
  t.lr = kv.getDouble("train.lr", 0.05);
  t.momentum = kv.getDouble("train.momentum", 0.9);
  t.seed = static_cast<std::uint64_t>(kv.getIndex("train.seed", 1));
  t.input_len = kv.getIndex("data.input_len", 12);
  t.horizon = kv.getIndex("data.output_len", 12);
  t.hidden = kv.getIndex("model.hidden", 100);
  t.gru_layers = kv.getIndex("model.gru_layers", 2);
  t.server_layers = kv.getIndex("model.server_layers", 2);
  t.decomp_window = kv.getIndex("model.decomp_window", 5);
  t.k = kv.getIndex("graph.k", 32);
  t.kappa = kv.getDouble("graph.kappa", 0.1);
  t.periods = kv.getIndex("graph.periods", 4);
  const std::string mu_mode = kv.getString("spectral.mu_mode", "relative");
  if (mu_mode == "relative") {
    t.mu.mode = ThresholdPolicy::Mode::kRelative;
  } else if (mu_mode == "absolute") {
    t.mu.mode = ThresholdPolicy::Mode::kAbsolute;
  } else {
    throw ConfigError("spectral.mu_mode: expected 'relative' or 'absolute'");
  }
  t.mu.value = kv.getDouble("spectral.mu", 0.1);

  t.ablation.no_decomposition = kv.getBool("ablation.no_decomposition", false);
  t.ablation.no_static_graph = kv.getBool("ablation.no_static_graph", false);
  t.ablation.no_dynamic_graph = kv.getBool("ablation.no_dynamic_graph", false);
  t.ablation.no_all_graph = kv.getBool("ablation.no_all_graph", false);
  t.ablation.normalize();

  const std::string target = kv.getString("privacy.target", "off");
  if (target == "off") {
    t.noise.target = NoisePolicy::Target::kOff;
  } else if (target == "hidden") {
    t.noise.target = NoisePolicy::Target::kHidden;
  } else if (target == "spectrum") {
    t.noise.target = NoisePolicy::Target::kSpectrum;
  } else {
    throw ConfigError("privacy.target: expected off/hidden/spectrum, got '" + target + "'");
  }
  t.noise.alpha = kv.getDouble("privacy.alpha", 1.0);
  t.noise.beta = kv.getDouble("privacy.beta", 0.0);
  t.noise.scale = kv.getDouble("privacy.scale", 1.0);
  t.noise.intensity = kv.getDouble("privacy.intensity", 0.0);
  t.noise.shift = kv.getDouble("privacy.shift", 0.0);
  if (t.noise.target != NoisePolicy::Target::kOff) t.noise.validate();

  cfg.comm.nodes = kv.getIndex("comm.nodes", 307);
  cfg.comm.weight_mb = kv.getDouble("comm.weight_mb", 1.15);
  cfg.comm.hidden_mb = kv.getDouble("comm.hidden_mb", 0.024);
  cfg.comm.train_steps = kv.getIndex("comm.train_steps", 11872);
  cfg.comm.rounds = kv.getIndex("comm.rounds", 1);
  cfg.comm.stage_a_rounds = kv.getIndex("comm.stage_a_rounds", 1);
  cfg.comm.stage_b_rounds = kv.getIndex("comm.stage_b_rounds", 1);

  cfg.privacy_sim.intensities =
      kv.getDoubleList("privacy_sim.intensities", {0.0, 0.1, 0.5, 1.0});
  cfg.privacy_sim.thresholds = kv.getDoubleList("privacy_sim.thresholds", {0.1, 0.25, 0.5});
  cfg.privacy_sim.trend_len = kv.getIndex("privacy_sim.trend_len", 512);
  cfg.privacy_sim.periods = kv.getIndex("privacy_sim.periods", 2);

  cfg.sweep_k = kv.getIndexList("graph.sweep_k", {});
  cfg.sweep_train = kv.getBool("graph.sweep_train", false);

  cfg.output_dir = kv.getString("output.dir", "out");
  if (const char* env = std::getenv("FEDST_OUTPUT_DIR")) {
    if (*env != '\0') cfg.output_dir = env;
  }
  return cfg;
}

Dataset loadConfiguredDataset(const ExperimentConfig& cfg) {
  if (cfg.data.source == DataConfig::Source::kCsv) {
    Dataset ds = loadCsv(cfg.data.csv_values, cfg.data.csv_adjacency);
    if (!cfg.data.preset.empty()) validateAgainstPreset(ds, cfg.data.preset);
    return ds;
  }
  return synthTwoCluster(cfg.data.synth_nodes_per_cluster, cfg.data.synth_steps,
                         cfg.train.periods, cfg.data.synth_noise_sd, cfg.train.seed,
                         cfg.data.synth_swap_clusters);
}

}  // namespace fedst
