#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedst/commands.hpp"
#include "fedst/error.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated spatiotemporal forecasting simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;

  auto* train = app.add_subcommand("train", "run federated training");
  train->add_option("--config", config_path, "experiment config file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on all splits");
  evaluate->add_option("--config", config_path, "experiment config file")->required();
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

  auto* build_graph = app.add_subcommand("build-graph", "construct and inspect attention masks");
  build_graph->add_option("--config", config_path, "experiment config file")->required();

  auto* privacy = app.add_subcommand("privacy-sim", "noise/reconstruction attack sweep");
  privacy->add_option("--config", config_path, "experiment config file")->required();

  auto* comm = app.add_subcommand("comm-report", "communication accounting table");
  comm->add_option("--config", config_path, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    const fedst::ExperimentConfig cfg = fedst::ExperimentConfig::fromFile(config_path);
    if (train->parsed()) {
      fedst::cli::cmdTrain(cfg);
    } else if (evaluate->parsed()) {
      fedst::cli::cmdEvaluate(cfg, checkpoint_path);
    } else if (build_graph->parsed()) {
      fedst::cli::cmdBuildGraph(cfg);
    } else if (privacy->parsed()) {
      fedst::cli::cmdPrivacySim(cfg);
    } else if (comm->parsed()) {
      fedst::cli::cmdCommReport(cfg);
    }
  } catch (const fedst::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
