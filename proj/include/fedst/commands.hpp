#pragma once

#include <string>

#include "fedst/config.hpp"

namespace fedst::cli {

/// Batch experiment drivers behind the CLI subcommands. All of them write
/// into cfg.output_dir and stamp outputs with the config hash; they throw
/// ConfigError for configuration problems and Error for runtime failures.
void cmdTrain(const ExperimentConfig& cfg);
void cmdEvaluate(const ExperimentConfig& cfg, const std::string& checkpoint_path);
void cmdBuildGraph(const ExperimentConfig& cfg);
void cmdPrivacySim(const ExperimentConfig& cfg);
void cmdCommReport(const ExperimentConfig& cfg);

}  // namespace fedst::cli
