#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hbuq/generator.hpp"
#include "hbuq/hyper.hpp"
#include "hbuq/prediction.hpp"
#include "hbuq/segment.hpp"
#include "hbuq/serialize.hpp"

namespace hbuq {

inline constexpr const char* kToolVersion = "1.0.0";

struct SegmentationConfig {
  double segment_seconds = 50.0;
  Index count = 40;
};

struct OptimizerConfig {
  MapOptions map;
  std::optional<VectorXd> initial_theta;  // defaults to the nominal parameters
};

struct PredictionConfig {
  double alpha0 = 2.0;
  double beta0 = 0.0;
  Index samples = 2000;
  std::optional<std::uint64_t> seed;    // defaults to the global seed
  double duration = 50.0;               // s of new GWN input
  std::optional<double> spectral_power; // defaults to the generator's
  std::optional<double> dt;             // defaults to the record's
  std::optional<std::filesystem::path> input_file;  // record CSV, input only
  VectorXd initial;                     // [displacements; velocities], zero if empty
  double level = 0.99;
};

struct PipelineConfig {
  ModelSpec model;
  std::optional<std::filesystem::path> source;
  std::vector<Index> source_sensors;  // empty: loader default
  std::optional<GeneratorConfig> generator;
  SegmentationConfig segmentation;
  OptimizerConfig optimizer;
  HyperOptions hyper;
  PredictionConfig prediction;
  std::filesystem::path output = ".";
  int workers = 1;
  std::uint64_t seed = 0;
};

/// Relative paths inside the document resolve against base_dir.
PipelineConfig config_from_json(const Json& j,
                                const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Calibration-relevant part of the config (model, data, segmentation,
/// optimizer, hyper settings, seed) in canonical form.
Json canonical_config(const PipelineConfig& config);
/// FNV-1a of the canonical config dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

/// Synthetic dataset from the generator section; the SDOF model uses the
/// frequency law and true damping, other models the parameter law.
SyntheticDataset generate_data(const PipelineConfig& config);

/// Model that generates data: the SDOF truth has the generator's damping.
ModelSpec truth_model(const PipelineConfig& config);

/// Record from the source file, or generated.
TimeHistoryRecord acquire_record(const PipelineConfig& config);

struct SegmentOutcome {
  Index index = 0;
  Index offset = 0;
  std::optional<SegmentPosterior> posterior;
  std::string error;
};

struct RunReport {
  std::vector<SegmentOutcome> segments;
  std::optional<HyperResult> hyper;
  std::string hyper_error;
  double segment_seconds_elapsed = 0.0;
  double hyper_seconds_elapsed = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;

  Index converged_segments() const;
  /// At least 90% of segments converged and the hyper optimisation converged.
  bool success() const;
};

/// Per-segment MAP in parallel, then the hyper-parameter MAP over the
/// converged segments. Segment failures are recorded, not thrown; fewer than
/// two converged segments raise kTooFewSegments.
RunReport calibrate(const PipelineConfig& config, const TimeHistoryRecord& record);

/// Report without timing; bitwise stable across worker counts.
Json report_to_json(const RunReport& report);
Json timing_to_json(const RunReport& report);

struct PredictionRun {
  ParameterDraws draws;
  PredictionSetup setup;
  PredictiveSummary summary;
  // Generator truth for the new event (noise-free), when a generator is set.
  std::optional<ResponseHistory> truth;
  std::optional<VectorXd> truth_theta;
  std::vector<double> coverage;  // per quantity: truth samples inside the band
};

/// Input for the prediction event: the input file, or new GWN.
MatrixXd prediction_input(const PipelineConfig& config, double dt);

PredictionRun predict(const PipelineConfig& config, const HyperParameters& hyper);

/// Commands. Each writes into config.output and returns a process exit code.
int cmd_generate(const PipelineConfig& config);
int cmd_calibrate(const PipelineConfig& config);
int cmd_predict(const PipelineConfig& config,
                const std::filesystem::path& hyper_file);
/// Text summary of the run directory's report and hyper parameters.
std::string cmd_report(const std::filesystem::path& run_dir);

/// Table of means, standard deviations and upper-triangular correlations.
std::string format_hyper_table(const HyperParameters& hyper);

}  // namespace hbuq
