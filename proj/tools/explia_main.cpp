// explia command-line driver.
#include <iostream>

#include <CLI11.hpp>

#include "explia/pipeline.hpp"

namespace {

constexpr int kStageFailure = 1;
constexpr int kConfigError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"explainable intrusion-detection pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  const std::vector<std::string> commands{"ingest", "balance", "train", "evaluate",
                                          "explain", "agree", "rfe", "pipeline"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name, name == "pipeline" ? "run every stage in order" : "run the " + name + " stage");
    sub->add_option("--config", config_path, "flat key = value config file")->required();
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--out", out, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  explia::pipeline::PipelineConfig config;
  try {
    config = explia::pipeline::PipelineConfig::load(config_path);
    if (seed) config.set("seed", std::to_string(*seed));
    if (!out.empty()) config.set("out", out);
    config.validate();
  } catch (const explia::Error& e) {
    std::cerr << "explia: config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (command == "pipeline") {
      explia::pipeline::cmd_pipeline(config);
    } else {
      const auto result = explia::pipeline::run_stage(command, config);
      std::cout << result.summary.dump(2) << '\n';
    }
  } catch (const explia::Error& e) {
    std::cerr << "explia: " << command << " failed (" << explia::to_string(e.kind()) << "): " << e.what() << '\n';
    return e.kind() == explia::ErrorKind::Config ? kConfigError : kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "explia: " << command << " failed: " << e.what() << '\n';
    return kStageFailure;
  }
  return 0;
}
