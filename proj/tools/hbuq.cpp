#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hbuq/pipeline.hpp"

namespace {

hbuq::PipelineConfig configure(const std::string& path,
                               const std::optional<std::string>& out,
                               const std::optional<int>& workers,
                               const std::optional<std::uint64_t>& seed) {
  hbuq::Json j = hbuq::read_json(path);
  if (seed) {
    j["seed"] = *seed;
    if (j.contains("data") && j["data"].contains("generator")) {
      j["data"]["generator"].erase("seed");
    }
  }
  hbuq::PipelineConfig config =
      hbuq::config_from_json(j, std::filesystem::path(path).parent_path());
  if (out) config.output = *out;
  if (workers) config.workers = *workers;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian calibration and prediction for linear structural models"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::string hyper_path;
  std::string run_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline configuration JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--workers", workers, "worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "global seed");
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic record");
  add_common(generate);
  auto* calibrate = app.add_subcommand("calibrate", "segment and hyper-parameter MAP");
  add_common(calibrate);
  auto* predict = app.add_subcommand("predict", "predictive moments and bands");
  add_common(predict);
  predict->add_option("--hyper", hyper_path, "hyper.json from calibrate")
      ->required()
      ->check(CLI::ExistingFile);
  auto* report = app.add_subcommand("report", "summarise a calibration run");
  report->add_option("--out,dir", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*report) {
      std::cout << hbuq::cmd_report(run_dir);
      return 0;
    }
    const hbuq::PipelineConfig config = configure(config_path, out, workers, seed);
    if (*generate) return hbuq::cmd_generate(config);
    if (*calibrate) {
      const int code = hbuq::cmd_calibrate(config);
      std::cout << hbuq::cmd_report(config.output);
      return code;
    }
    return hbuq::cmd_predict(config, hyper_path);
  } catch (const hbuq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
