#include "fedst/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "fedst/error.hpp"
#include "fedst/rng.hpp"

namespace fedst {

namespace {

std::vector<std::string> splitLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parseCell(const std::string& cell, std::size_t line_no, const std::string& path) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw IngestError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  if (pos != cell.size()) {
    throw IngestError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  return v;
}

}  // namespace

Dataset loadCsv(const std::string& values_path, const std::optional<std::string>& graph_path) {
  std::ifstream in(values_path);
  if (!in) throw IngestError("cannot open values file '" + values_path + "'");

  std::string line;
  if (!std::getline(in, line)) throw IngestError(values_path + ": empty file");
  std::vector<std::string> header = splitLine(trim(line));
  if (header.size() < 2) throw IngestError(values_path + ":1: header needs timestamp + nodes");

  const std::size_t n = header.size() - 1;
  std::map<std::string, Index> node_index;
  for (std::size_t i = 1; i < header.size(); ++i) {
    node_index[trim(header[i])] = static_cast<Index>(i - 1);
  }

  std::vector<std::vector<double>> columns(n);
  std::vector<bool> seen(n, false);
  std::size_t filled = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::vector<std::string> cells = splitLine(t);
    if (cells.size() != header.size()) {
      throw IngestError(values_path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::string cell = trim(cells[i + 1]);
      if (cell.empty()) {
        // Forward fill; a leading gap is resolved once the first value shows up.
        columns[i].push_back(seen[i] ? columns[i].back()
                                     : std::numeric_limits<double>::quiet_NaN());
        ++filled;
      } else {
        const double v = parseCell(cell, line_no, values_path);
        if (!seen[i]) {
          seen[i] = true;
          for (double& prior : columns[i]) {
            if (std::isnan(prior)) prior = v;
          }
        }
        columns[i].push_back(v);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      throw IngestError(values_path + ": column '" + header[i + 1] + "' has no values");
    }
  }
  if (filled > 0) {
    std::cerr << "loadCsv: forward-filled " << filled << " missing cells in " << values_path
              << "\n";
  }

  Dataset ds;
  ds.name = values_path;
  const Index steps = static_cast<Index>(columns.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    Matrix m(steps, 1);
    for (Index t = 0; t < steps; ++t) m(t, 0) = columns[i][static_cast<std::size_t>(t)];
    ds.values.push_back(std::move(m));
  }

  if (graph_path) {
    std::ifstream gin(*graph_path);
    if (!gin) throw IngestError("cannot open adjacency file '" + *graph_path + "'");
    StaticGraph g;
    g.n = static_cast<Index>(n);
    std::size_t gline = 0;
    while (std::getline(gin, line)) {
      ++gline;
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (gline == 1) continue;  // header: from,to,distance
      const std::vector<std::string> cells = splitLine(t);
      if (cells.size() != 3) {
        throw IngestError(*graph_path + ":" + std::to_string(gline) +
                          ": expected from,to,distance");
      }
      StaticGraph::Edge e;
      for (int side = 0; side < 2; ++side) {
        const std::string id = trim(cells[static_cast<std::size_t>(side)]);
        const auto it = node_index.find(id);
        if (it == node_index.end()) {
          throw IngestError(*graph_path + ":" + std::to_string(gline) + ": unknown node id '" +
                            id + "'");
        }
        (side == 0 ? e.from : e.to) = it->second;
      }
      e.distance = parseCell(trim(cells[2]), gline, *graph_path);
      if (e.distance < 0.0) {
        throw IngestError(*graph_path + ":" + std::to_string(gline) + ": negative distance");
      }
      g.edges.push_back(e);
    }
    ds.graph = std::move(g);
  }
  return ds;
}

const std::vector<DatasetPreset>& datasetPresets() {
  static const std::vector<DatasetPreset> presets = {
      {"PEMS03", 358, 26208, 304},  {"PEMS04", 307, 16992, 340},
      {"PEMS08", 170, 17856, 295},  {"METR-LA", 270, 34272, 1515},
      {"Solar", 137, 52560, -1},    {"ECL", 321, 26304, -1},
  };
  return presets;
}

std::optional<DatasetPreset> findDatasetPreset(const std::string& name) {
  for (const DatasetPreset& p : datasetPresets()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

void validateAgainstPreset(const Dataset& ds, const std::string& preset_name) {
  const auto preset = findDatasetPreset(preset_name);
  if (!preset) throw ConfigError("unknown dataset preset '" + preset_name + "'");
  if (ds.nodes() != preset->nodes || ds.steps() != preset->steps) {
    throw ConfigError("dataset is " + std::to_string(ds.nodes()) + " nodes x " +
                      std::to_string(ds.steps()) + " steps but preset " + preset->name +
                      " expects " + std::to_string(preset->nodes) + " x " +
                      std::to_string(preset->steps));
  }
  if (preset->edges >= 0 && ds.graph &&
      static_cast<Index>(ds.graph->edges.size()) != preset->edges) {
    throw ConfigError("adjacency has " + std::to_string(ds.graph->edges.size()) +
                      " edges but preset " + preset->name + " expects " +
                      std::to_string(preset->edges));
  }
}

std::vector<Index> windowStarts(Index begin, Index end, Index in_len, Index out_len) {
  std::vector<Index> starts;
  for (Index t = begin; t + in_len + out_len <= end; ++t) starts.push_back(t);
  return starts;
}

SplitWindows splitAndWindow(const Dataset& ds, double train_ratio, double val_ratio,
                            double test_ratio, Index in_len, Index out_len) {
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("splitAndWindow: ratios must sum to 1");
  }
  const Index t = ds.steps();
  SplitWindows out;
  out.spans.train_end = static_cast<Index>(std::llround(train_ratio * static_cast<double>(t)));
  out.spans.val_end =
      static_cast<Index>(std::llround((train_ratio + val_ratio) * static_cast<double>(t)));
  out.spans.test_end = t;

  const auto fill = [&](Index begin, Index end, SampleSet& set) {
    const std::vector<Index> starts = windowStarts(begin, end, in_len, out_len);
    if (starts.empty()) {
      throw ConfigError("splitAndWindow: split [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") too small for one window");
    }
    for (Index node = 0; node < ds.nodes(); ++node) {
      const Matrix& series = ds.values[static_cast<std::size_t>(node)];
      for (Index s : starts) {
        SampleWindow w;
        w.node_id = node;
        w.start = s;
        w.input = series.middleRows(s, in_len);
        w.target = series.block(s + in_len, 0, out_len, 1);
        set.samples.push_back(std::move(w));
      }
    }
  };
  fill(0, out.spans.train_end, out.train);
  fill(out.spans.train_end, out.spans.val_end, out.val);
  fill(out.spans.val_end, out.spans.test_end, out.test);
  return out;
}

Normalizer Normalizer::fit(const Dataset& ds, Index train_end) {
  Normalizer nz;
  nz.mean.resize(ds.nodes());
  nz.stddev.resize(ds.nodes());
  for (Index node = 0; node < ds.nodes(); ++node) {
    const auto col = ds.values[static_cast<std::size_t>(node)].col(0).head(train_end);
    const double m = col.mean();
    const double var = (col.array() - m).square().sum() / static_cast<double>(train_end);
    double sd = std::sqrt(var);
    if (sd == 0.0) {
      std::cerr << "Normalizer: node " << node << " has zero train variance, using std 1\n";
      sd = 1.0;
    }
    nz.mean[node] = m;
    nz.stddev[node] = sd;
  }
  return nz;
}

Metrics computeMetrics(const Vector& y_hat, const Vector& y) {
  if (y_hat.size() != y.size()) {
    throw DimensionError("computeMetrics: prediction has " + std::to_string(y_hat.size()) +
                         " entries but truth has " + std::to_string(y.size()));
  }
  Metrics m;
  const Vector err = y_hat - y;
  m.mae = err.array().abs().mean();
  m.rmse = std::sqrt(err.array().square().mean());
  double mape_acc = 0.0;
  Index mape_count = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) > 1e-3) {
      mape_acc += std::abs(err[i] / y[i]);
      ++mape_count;
    }
  }
  if (mape_count > 0) m.mape_percent = 100.0 * mape_acc / static_cast<double>(mape_count);
  return m;
}

Metrics computeMetrics(const Matrix& y_hat, const Matrix& y) {
  Vector a(y_hat.size()), b(y.size());
  Index pos = 0;
  for (Index r = 0; r < y_hat.rows(); ++r) {
    for (Index c = 0; c < y_hat.cols(); ++c, ++pos) {
      a[pos] = y_hat(r, c);
      b[pos] = y(r, c);
    }
  }
  return computeMetrics(a, b);
}

namespace {

double gaussian(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Dataset synthTwoCluster(Index n_per_cluster, Index steps, Index periods, double noise_sd,
                        std::uint64_t seed, bool swap_membership) {
  if (n_per_cluster < 1 || steps < 1 || periods < 1) {
    throw ConfigError("synthTwoCluster: all sizes must be positive");
  }
  const std::vector<Index> bounds = evenPeriodBoundaries(steps, periods);
  const double t_total = static_cast<double>(steps);

  const auto tone_a = [&](double t) {
    return std::sin(2.0 * std::numbers::pi * t / 24.0) + 1.5 + 0.5 * t / t_total;
  };
  const auto tone_b = [&](double t) {
    return std::sin(2.0 * std::numbers::pi * t / 12.0) + 3.0 - 0.5 * t / t_total;
  };

  Dataset ds;
  ds.name = "synth_two_cluster";
  ds.step_minutes = 5.0;
  const Index n = 2 * n_per_cluster;
  for (Index node = 0; node < n; ++node) {
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(node + 1));
    const Index base_cluster = node < n_per_cluster ? 0 : 1;
    Matrix series(steps, 1);
    Index period = 0;
    for (Index t = 0; t < steps; ++t) {
      while (t >= bounds[static_cast<std::size_t>(period) + 1]) ++period;
      Index cluster = base_cluster;
      if (swap_membership && period % 2 == 1) cluster = 1 - cluster;
      const double base = cluster == 0 ? tone_a(static_cast<double>(t))
                                       : tone_b(static_cast<double>(t));
      series(t, 0) = base + (noise_sd > 0.0 ? noise_sd * gaussian(rng) : 0.0);
    }
    ds.values.push_back(std::move(series));
    ds.cluster_labels.push_back(base_cluster);
  }
  return ds;
}

}  // namespace fedst
