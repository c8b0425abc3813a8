#include "hbuq/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hbuq/parallel.hpp"
#include "hbuq/random.hpp"

namespace hbuq {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchemaError,
                std::string("field '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

constexpr Quantity kQuantities[] = {Quantity::kDisplacement, Quantity::kVelocity,
                                    Quantity::kAcceleration};

}  // namespace

PipelineConfig config_from_json(const Json& j, const fs::path& base_dir) {
  PipelineConfig c;
  require(j.contains("model"), ErrorKind::kSchemaError, "missing 'model'");
  c.model = model_from_json(j.at("model"));
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.workers = get_or<int>(j, "workers", 1);
  if (j.contains("output")) {
    c.output = resolve(j.at("output").get<std::string>(), base_dir);
  }

  require(j.contains("data"), ErrorKind::kSchemaError, "missing 'data'");
  const Json& data = j.at("data");
  const bool has_source = data.contains("source");
  const bool has_generator = data.contains("generator");
  require(has_source != has_generator, ErrorKind::kInvalidConfig,
          "'data' needs exactly one of 'source' and 'generator'");
  if (has_source) {
    c.source = resolve(data.at("source").get<std::string>(), base_dir);
    if (data.contains("sensors")) {
      for (const auto& s : data.at("sensors")) {
        c.source_sensors.push_back(s.get<Index>());
      }
    }
  } else {
    Json g = data.at("generator");
    if (!g.contains("seed")) g["seed"] = c.seed;
    c.generator = generator_from_json(g);
  }

  if (j.contains("segmentation")) {
    const Json& s = j.at("segmentation");
    c.segmentation.segment_seconds =
        get_or(s, "segment_seconds", c.segmentation.segment_seconds);
    c.segmentation.count = get_or<Index>(s, "count", c.segmentation.count);
  }
  require(c.segmentation.segment_seconds > 0 && c.segmentation.count >= 1,
          ErrorKind::kInvalidConfig, "segmentation must be positive");

  if (j.contains("optimizer")) {
    const Json& o = j.at("optimizer");
    MapOptions& m = c.optimizer.map;
    m.gradient_tolerance = get_or(o, "gradient_tolerance", m.gradient_tolerance);
    m.step_tolerance = get_or(o, "step_tolerance", m.step_tolerance);
    m.max_iterations = get_or(o, "max_iterations", m.max_iterations);
    m.starts = get_or(o, "starts", m.starts);
    m.jitter = get_or(o, "jitter", m.jitter);
    if (o.contains("initial_theta")) {
      c.optimizer.initial_theta = vector_from_json(o.at("initial_theta"));
    }
  }
  require(c.optimizer.map.starts >= 1 && c.optimizer.map.max_iterations >= 1,
          ErrorKind::kInvalidConfig, "optimizer needs starts and iterations");

  if (j.contains("hyper")) {
    const Json& h = j.at("hyper");
    c.hyper.gradient_tolerance =
        get_or(h, "gradient_tolerance", c.hyper.gradient_tolerance);
    c.hyper.max_iterations = get_or(h, "max_iterations", c.hyper.max_iterations);
    if (h.contains("reference") && h.at("reference").is_number_integer()) {
      c.hyper.reference_index = h.at("reference").get<Index>();
    } else if (h.contains("reference")) {
      require(h.at("reference") == "median", ErrorKind::kInvalidConfig,
              "hyper reference must be 'median' or a segment index");
    }
  }

  if (j.contains("prediction")) {
    const Json& p = j.at("prediction");
    PredictionConfig& pc = c.prediction;
    pc.alpha0 = get_or(p, "alpha0", pc.alpha0);
    pc.beta0 = get_or(p, "beta0", pc.beta0);
    pc.samples = get_or<Index>(p, "samples", pc.samples);
    if (p.contains("seed")) pc.seed = p.at("seed").get<std::uint64_t>();
    pc.duration = get_or(p, "duration", pc.duration);
    if (p.contains("spectral_power")) {
      pc.spectral_power = p.at("spectral_power").get<double>();
    }
    if (p.contains("dt")) pc.dt = p.at("dt").get<double>();
    if (p.contains("input_file")) {
      pc.input_file = resolve(p.at("input_file").get<std::string>(), base_dir);
    }
    if (p.contains("initial")) pc.initial = vector_from_json(p.at("initial"));
    pc.level = get_or(p, "level", pc.level);
  }
  const PredictionConfig& pc = c.prediction;
  require(pc.alpha0 > 1 && pc.beta0 >= 0 && pc.samples >= 1,
          ErrorKind::kInvalidConfig,
          "prediction needs alpha0 > 1, beta0 >= 0, samples >= 1");
  require(pc.level > 0 && pc.level < 1, ErrorKind::kInvalidConfig,
          "prediction level must lie in (0, 1)");
  require(pc.initial.size() == 0 || pc.initial.size() == 2 * dof_count(c.model),
          ErrorKind::kDimensionMismatch, "prediction initial state has wrong size");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json(read_json(path), path.parent_path());
}

Json canonical_config(const PipelineConfig& c) {
  Json j;
  j["model"] = to_json(c.model);
  if (c.source) {
    Json sensors = Json::array();
    for (Index s : c.source_sensors) sensors.push_back(s);
    j["data"] = {{"source", c.source->filename().string()}, {"sensors", sensors}};
  } else {
    j["data"] = {{"generator", to_json(*c.generator)}};
  }
  j["segmentation"] = {{"segment_seconds", c.segmentation.segment_seconds},
                       {"count", c.segmentation.count}};
  const MapOptions& m = c.optimizer.map;
  j["optimizer"] = {{"gradient_tolerance", m.gradient_tolerance},
                    {"step_tolerance", m.step_tolerance},
                    {"max_iterations", m.max_iterations},
                    {"starts", m.starts},
                    {"jitter", m.jitter}};
  if (c.optimizer.initial_theta) {
    j["optimizer"]["initial_theta"] = vector_to_json(*c.optimizer.initial_theta);
  }
  j["hyper"] = {{"gradient_tolerance", c.hyper.gradient_tolerance},
                {"max_iterations", c.hyper.max_iterations}};
  if (c.hyper.reference_index) {
    j["hyper"]["reference"] = *c.hyper.reference_index;
  } else {
    j["hyper"]["reference"] = "median";
  }
  j["seed"] = c.seed;
  return j;
}

std::string config_hash(const PipelineConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(config).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelSpec truth_model(const PipelineConfig& config) {
  require(config.generator.has_value(), ErrorKind::kInvalidConfig,
          "no generator configured");
  if (const auto* sdof = std::get_if<SdofLinear>(&config.model.structure)) {
    return {SdofLinear{config.generator->frequency_law.mean,
                       config.generator->damping_true, sdof->mass},
            Excitation::kBaseAcceleration};
  }
  return config.model;
}

SyntheticDataset generate_data(const PipelineConfig& config) {
  const ModelSpec truth = truth_model(config);
  GeneratorConfig g = *config.generator;
  if (std::holds_alternative<SdofLinear>(truth.structure)) {
    g.parameter_law.reset();
  }
  return synthesize_dataset(truth, g);
}

TimeHistoryRecord acquire_record(const PipelineConfig& config) {
  if (config.generator) return generate_data(config).record;
  TimeHistoryRecord r = load_record(*config.source);
  if (!config.source_sensors.empty()) r.sensors = config.source_sensors;
  return r;
}

Index RunReport::converged_segments() const {
  Index n = 0;
  for (const auto& s : segments) {
    if (s.posterior && s.posterior->converged) ++n;
  }
  return n;
}

bool RunReport::success() const {
  return !segments.empty() && hyper && hyper->converged &&
         10 * converged_segments() >= 9 * static_cast<Index>(segments.size());
}

RunReport calibrate(const PipelineConfig& config, const TimeHistoryRecord& record) {
  check_record(record, dof_count(config.model));
  require(record.input_channels() == input_count(config.model),
          ErrorKind::kDimensionMismatch,
          "record input channels do not match the model excitation");
  require(config.segmentation.count >= 2, ErrorKind::kTooFewSegments,
          "hyper inference needs at least two segments");
  const Index length = static_cast<Index>(
      std::llround(config.segmentation.segment_seconds / record.dt));
  const SegmentSet set = split_segments(record, length, config.segmentation.count);

  RunReport report;
  report.config_hash = config_hash(config);
  report.seed = config.seed;
  report.segments.resize(set.segments.size());

  const VectorXd theta0 = config.optimizer.initial_theta
                              ? *config.optimizer.initial_theta
                              : nominal_parameters(config.model);
  const VectorXd psi0 = VectorXd::Zero(2 * dof_count(config.model));

  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(set.segments.size(), config.workers, [&](std::size_t i) {
    SegmentOutcome& out = report.segments[i];
    out.index = static_cast<Index>(i);
    out.offset = set.offsets[i];
    MapOptions options = config.optimizer.map;
    options.seed = substream_seed(config.seed, Stream::kMultistart, i);
    try {
      out.posterior = infer_segment(set.segments[i], config.model, theta0, psi0,
                                    options);
    } catch (const Error& e) {
      out.error = e.what();
    } catch (const std::exception& e) {
      out.error = std::string("Unexpected: ") + e.what();
    }
  });
  report.segment_seconds_elapsed = seconds_since(t0);

  std::vector<GaussianSummary> summaries;
  for (const auto& s : report.segments) {
    if (s.posterior && s.posterior->converged) {
      summaries.push_back({s.posterior->theta, s.posterior->theta_covariance});
    }
  }
  require(summaries.size() >= 2, ErrorKind::kTooFewSegments,
          "fewer than two segments converged");

  const auto t1 = std::chrono::steady_clock::now();
  try {
    report.hyper = optimize_hyper(summaries, config.hyper);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kTooFewSegments) throw;
    report.hyper_error = e.what();
  }
  report.hyper_seconds_elapsed = seconds_since(t1);
  return report;
}

Json report_to_json(const RunReport& r) {
  Json j;
  j["provenance"] = {{"config_hash", r.config_hash},
                     {"seed", r.seed},
                     {"tool_version", kToolVersion}};
  Json segments = Json::array();
  for (const auto& s : r.segments) {
    Json e;
    e["index"] = s.index;
    e["offset"] = s.offset;
    if (s.posterior) {
      e["status"] = s.posterior->converged ? "converged" : "not_converged";
      e["posterior"] = to_json(*s.posterior);
    } else {
      e["status"] = "failed";
      e["error"] = s.error;
    }
    segments.push_back(std::move(e));
  }
  j["segments"] = std::move(segments);
  j["converged_segments"] = r.converged_segments();
  if (r.hyper) {
    Json h = to_json(r.hyper->map);
    h["initial"] = to_json(r.hyper->initial);
    h["reference_covariance"] = matrix_to_json(r.hyper->reference_covariance);
    h["objective"] = r.hyper->objective;
    h["converged"] = r.hyper->converged;
    h["iterations"] = r.hyper->iterations;
    h["stop_reason"] = r.hyper->stop_reason;
    j["hyper"] = std::move(h);
  } else {
    j["hyper"] = {{"error", r.hyper_error}};
  }
  j["success"] = r.success();
  return j;
}

Json timing_to_json(const RunReport& r) {
  return {{"segments_seconds", r.segment_seconds_elapsed},
          {"hyper_seconds", r.hyper_seconds_elapsed}};
}

MatrixXd prediction_input(const PipelineConfig& config, double dt) {
  const PredictionConfig& pc = config.prediction;
  if (pc.input_file) {
    const TimeHistoryRecord r = load_record(*pc.input_file);
    require(r.input_channels() == input_count(config.model),
            ErrorKind::kDimensionMismatch,
            "prediction input channels do not match the model");
    return r.input;
  }
  require(input_count(config.model) == 1, ErrorKind::kInvalidConfig,
          "generated prediction input needs a single input channel");
  const double s0 = pc.spectral_power ? *pc.spectral_power
                    : config.generator ? config.generator->spectral_power
                                       : GeneratorConfig{}.spectral_power;
  const Index n = static_cast<Index>(std::llround(pc.duration / dt));
  const std::uint64_t seed = pc.seed ? *pc.seed : config.seed;
  return generate_gwn(s0, dt, n, substream_seed(seed, Stream::kPredictionInput))
      .transpose();
}

PredictionRun predict(const PipelineConfig& config, const HyperParameters& hyper) {
  const PredictionConfig& pc = config.prediction;
  require(hyper.mean.size() == parameter_count(config.model),
          ErrorKind::kDimensionMismatch,
          "hyper parameters do not match the model");
  double dt = 0.0;
  if (pc.dt) {
    dt = *pc.dt;
  } else if (pc.input_file) {
    dt = load_record(*pc.input_file).dt;
  } else if (config.generator) {
    dt = config.generator->dt;
  } else {
    dt = load_record(*config.source).dt;
  }
  require(dt > 0, ErrorKind::kInvalidConfig, "prediction dt must be positive");

  PredictionRun run;
  run.setup.spec = config.model;
  const Index dofs = dof_count(config.model);
  run.setup.initial = pc.initial.size() ? InitialConditions::from_stacked(pc.initial)
                                        : InitialConditions::zero(dofs);
  run.setup.input = prediction_input(config, dt);
  run.setup.dt = dt;
  run.setup.alpha0 = pc.alpha0;
  run.setup.beta0 = pc.beta0;
  run.setup.workers = config.workers;

  const std::uint64_t seed = pc.seed ? *pc.seed : config.seed;
  run.draws = sample_parameters(hyper, pc.samples, seed, config.model);
  run.summary = predictive_moments(run.draws.samples, run.setup);

  if (config.generator) {
    const ModelSpec truth = truth_model(config);
    GeneratorConfig g = *config.generator;
    if (std::holds_alternative<SdofLinear>(truth.structure)) g.parameter_law.reset();
    const Index record_samples = sample_count(g);
    const Index block = std::max<Index>(
        1, static_cast<Index>(std::llround(g.frequency_law.redraw_block / g.dt)));
    // The new event takes the parameters of the block after the record.
    const Index next = (record_samples + block - 1) / block;
    run.truth_theta = sample_block_parameters(truth, g, next);
    run.truth = simulate(truth, *run.truth_theta, run.setup.initial,
                         run.setup.input, dt);
    for (Quantity q : kQuantities) {
      const CredibleBand band = credible_band(run.summary.of(q), pc.level);
      const MatrixXd& x = run.truth->of(q);
      const auto inside = (x.array() >= band.lower.array() &&
                           x.array() <= band.upper.array())
                              .count();
      run.coverage.push_back(static_cast<double>(inside) /
                             static_cast<double>(x.size()));
    }
  }
  return run;
}

int cmd_generate(const PipelineConfig& config) {
  require(config.generator.has_value(), ErrorKind::kInvalidConfig,
          "generate needs a 'generator' data section");
  fs::create_directories(config.output);
  const SyntheticDataset d = generate_data(config);
  save_record(d.record, config.output / "record.csv");
  Json truth;
  truth["config_hash"] = config_hash(config);
  truth["seed"] = config.generator->seed;
  truth["dt"] = d.record.dt;
  truth["samples"] = d.record.samples();
  truth["block_samples"] = d.block_samples;
  truth["block_parameters"] = matrix_to_json(d.block_parameters.transpose());
  truth["noise_sigma"] = vector_to_json(d.noise_sigma);
  truth["generator"] = to_json(*config.generator);
  write_json(truth, config.output / "truth.json");
  return 0;
}

int cmd_calibrate(const PipelineConfig& config) {
  fs::create_directories(config.output);
  const RunReport report = calibrate(config, acquire_record(config));
  write_json(report_to_json(report), config.output / "report.json");
  write_json(timing_to_json(report), config.output / "timing.json");
  if (report.hyper) {
    Json h = to_json(report.hyper->map);
    h["config_hash"] = report.config_hash;
    write_json(h, config.output / "hyper.json");
  }
  return report.success() ? 0 : 1;
}

int cmd_predict(const PipelineConfig& config, const fs::path& hyper_file) {
  const Json h = read_json(hyper_file);
  const std::string expected = config_hash(config);
  require(h.contains("config_hash") && h.at("config_hash") == expected,
          ErrorKind::kInvalidConfig,
          "hyper file " + hyper_file.string() +
              " was produced by a different configuration");
  const HyperParameters hyper = hyper_from_json(h);
  const PredictionRun run = predict(config, hyper);

  fs::create_directories(config.output);
  for (Quantity q : kQuantities) {
    const auto& m = run.summary.of(q);
    save_prediction_csv(m, credible_band(m, config.prediction.level),
                        run.setup.dt,
                        config.output / ("prediction_" + std::string(quantity_tag(q)) + ".csv"));
  }
  Json meta;
  meta["config_hash"] = expected;
  meta["alpha0"] = config.prediction.alpha0;
  meta["beta0"] = config.prediction.beta0;
  meta["samples"] = config.prediction.samples;
  meta["seed"] = config.prediction.seed ? *config.prediction.seed : config.seed;
  meta["rejected"] = run.draws.rejected;
  meta["level"] = config.prediction.level;
  meta["dt"] = run.setup.dt;
  meta["steps"] = run.setup.input.cols();
  if (run.truth) {
    meta["truth_theta"] = vector_to_json(*run.truth_theta);
    Json cov;
    for (std::size_t i = 0; i < run.coverage.size(); ++i) {
      cov[std::string(quantity_tag(kQuantities[i]))] = run.coverage[i];
    }
    meta["truth_coverage"] = cov;
  }
  write_json(meta, config.output / "prediction.json");
  return 0;
}

std::string format_hyper_table(const HyperParameters& hyper) {
  std::ostringstream out;
  const VectorXd sd = hyper.standard_deviations();
  const MatrixXd rho = hyper.correlation();
  const Index n = hyper.mean.size();
  char buf[128];
  out << "parameter        mean             std\n";
  for (Index i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "theta%-3ld %16.6g %16.6g\n",
                  static_cast<long>(i + 1), hyper.mean(i), sd(i));
    out << buf;
  }
  if (n > 1) {
    out << "correlation coefficients\n";
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        std::snprintf(buf, sizeof buf, "rho(theta%ld,theta%ld) %10.4f\n",
                      static_cast<long>(p + 1), static_cast<long>(q + 1),
                      rho(p, q));
        out << buf;
      }
    }
  }
  return out.str();
}

std::string cmd_report(const fs::path& run_dir) {
  const fs::path report_path = run_dir / "report.json";
  const fs::path hyper_path = run_dir / "hyper.json";
  std::string missing;
  if (!fs::exists(report_path)) missing += " report.json";
  if (!fs::exists(hyper_path)) missing += " hyper.json";
  require(missing.empty(), ErrorKind::kMissingArtifacts,
          "run directory " + run_dir.string() + " lacks" + missing);
  const Json report = read_json(report_path);
  const HyperParameters hyper = hyper_from_json(read_json(hyper_path));

  std::ostringstream out;
  const Json& segs = report.at("segments");
  out << "segments: " << segs.size() << ", converged: "
      << report.at("converged_segments").get<Index>() << "\n";
  for (const auto& s : segs) {
    if (s.at("status") != "converged") {
      out << "  segment " << s.at("index").get<Index>() << ": "
          << s.at("status").get<std::string>();
      if (s.contains("error")) out << " (" << s.at("error").get<std::string>() << ")";
      out << "\n";
    }
  }
  const Json& h = report.at("hyper");
  if (h.contains("initial")) {
    out << "\ninitial estimate\n"
        << format_hyper_table(hyper_from_json(h.at("initial")));
  }
  out << "\nMAP estimate\n" << format_hyper_table(hyper);
  if (h.contains("converged")) {
    out << "\nhyper optimisation: "
        << (h.at("converged").get<bool>() ? "converged" : "not converged")
        << " after " << h.at("iterations").get<int>() << " iterations ("
        << h.at("stop_reason").get<std::string>() << ")\n";
  }
  return out.str();
}

}  // namespace hbuq
