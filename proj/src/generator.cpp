#include "hbuq/generator.hpp"

#include <cmath>

#include "hbuq/random.hpp"
#include "hbuq/state_space.hpp"

namespace hbuq {

void validate(const GeneratorConfig& c) {
  require(c.spectral_power >= 0, ErrorKind::kInvalidConfig,
          "spectral power must be non-negative");
  require(c.dt > 0, ErrorKind::kInvalidConfig, "dt must be positive");
  require(c.duration > 0, ErrorKind::kInvalidConfig,
          "duration must be positive");
  require(c.noise_rms_ratio >= 0 && c.noise_rms_ratio < 1,
          ErrorKind::kInvalidConfig, "noise_rms_ratio must lie in [0, 1)");
  require(c.frequency_law.redraw_block > 0, ErrorKind::kInvalidConfig,
          "redraw_block must be positive");
  require(c.frequency_law.std >= 0, ErrorKind::kInvalidConfig,
          "frequency std must be non-negative");
  require(!c.sensors.empty(), ErrorKind::kInvalidConfig,
          "at least one sensor is required");
  if (c.parameter_law) {
    const auto& law = *c.parameter_law;
    require(law.covariance.rows() == law.mean.size() &&
                law.covariance.cols() == law.mean.size(),
            ErrorKind::kInvalidConfig, "parameter law shapes disagree");
  } else {
    require(c.frequency_law.mean > 0, ErrorKind::kInvalidConfig,
            "frequency mean must be positive");
    require(c.damping_true > 0 && c.damping_true < 1,
            ErrorKind::kInvalidConfig, "damping_true must lie in (0, 1)");
  }
  require(sample_count(c) > 0, ErrorKind::kInvalidConfig,
          "duration shorter than one sample");
}

Index sample_count(const GeneratorConfig& c) {
  return static_cast<Index>(std::llround(c.duration / c.dt));
}

VectorXd generate_gwn(double spectral_power, double dt, Index n,
                      std::uint64_t seed) {
  require(n > 0, ErrorKind::kInvalidConfig, "sample count must be positive");
  const double sigma = std::sqrt(2.0 * std::numbers::pi * spectral_power / dt);
  Rng rng = make_rng(seed, Stream::kInput);
  return sigma * standard_normal(rng, n);
}

ParameterLaw parameter_law(const ModelSpec& truth,
                           const GeneratorConfig& config) {
  ParameterLaw law;
  if (config.parameter_law) {
    law = *config.parameter_law;
  } else {
    law.mean = VectorXd::Constant(1, config.frequency_law.mean);
    law.covariance = MatrixXd::Constant(
        1, 1, config.frequency_law.std * config.frequency_law.std);
  }
  require(law.mean.size() == parameter_count(truth), ErrorKind::kInvalidConfig,
          "parameter law dimension differs from the model");
  return law;
}

VectorXd sample_block_parameters(const ModelSpec& truth,
                                 const GeneratorConfig& config, Index block) {
  const ParameterLaw law = parameter_law(truth, config);
  const Index nparams = law.mean.size();
  MatrixXd factor = MatrixXd::Zero(nparams, nparams);
  if (!law.covariance.isZero(0.0)) {
    const Eigen::LLT<MatrixXd> llt(law.covariance);
    require(llt.info() == Eigen::Success, ErrorKind::kInvalidConfig,
            "parameter covariance is not SPD");
    factor = llt.matrixL();
  }
  Rng rng = make_rng(config.seed, Stream::kParameters,
                     static_cast<std::uint64_t>(block));
  for (int attempt = 0;; ++attempt) {
    VectorXd theta = law.mean + factor * standard_normal(rng, nparams);
    try {
      (void)assemble_matrices<double>(truth, theta);
      return theta;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNonPositiveDefinite || attempt > 1000) throw;
    }
  }
}

SyntheticDataset synthesize_dataset(const ModelSpec& truth,
                                    const GeneratorConfig& config) {
  validate(config);
  const Index n = sample_count(config);
  const Index dofs = dof_count(truth);
  const Index nparams = parameter_count(truth);
  const Index channels = static_cast<Index>(config.sensors.size());
  for (Index s : config.sensors) {
    require(s >= 0 && s < dofs, ErrorKind::kInvalidConfig,
            "sensor index outside model DOF range");
  }
  require(truth.excitation == Excitation::kBaseAcceleration,
          ErrorKind::kInvalidConfig, "generator drives base excitation only");

  SyntheticDataset out;
  out.record.dt = config.dt;
  out.record.sensors = config.sensors;
  out.record.quantity = config.quantity;
  out.record.input =
      generate_gwn(config.spectral_power, config.dt, n, config.seed).transpose();

  out.block_samples = std::max<Index>(
      1, static_cast<Index>(std::llround(config.frequency_law.redraw_block /
                                         config.dt)));
  const Index blocks = (n + out.block_samples - 1) / out.block_samples;
  out.block_parameters.resize(nparams, blocks);
  out.block_states.resize(2 * dofs, blocks);
  out.clean_output.resize(channels, n);

  VectorXd state = VectorXd::Zero(2 * dofs);
  for (Index b = 0; b < blocks; ++b) {
    const VectorXd theta = sample_block_parameters(truth, config, b);
    out.block_parameters.col(b) = theta;
    out.block_states.col(b) = state;

    const auto ss =
        state_space(assemble_matrices<double>(truth, theta), truth.excitation);
    const auto dm = discretize(ss, config.dt);
    const Index start = b * out.block_samples;
    const Index stop = std::min(n, start + out.block_samples);
    for (Index k = start; k < stop; ++k) {
      const auto u = out.record.input.col(k);
      for (Index j = 0; j < channels; ++j) {
        const Index s = config.sensors[j];
        switch (config.quantity) {
          case Quantity::kDisplacement:
            out.clean_output(j, k) = state(s);
            break;
          case Quantity::kVelocity:
            out.clean_output(j, k) = state(dofs + s);
            break;
          case Quantity::kAcceleration:
            out.clean_output(j, k) = ss.acceleration.row(s).dot(state) +
                                     ss.feedthrough.row(s).dot(u);
            break;
        }
      }
      state = dm.transition * state + dm.input * u;
    }
  }

  out.noise_sigma.resize(channels);
  out.record.output = out.clean_output;
  for (Index j = 0; j < channels; ++j) {
    const double rms = std::sqrt(out.clean_output.row(j).squaredNorm() /
                                 static_cast<double>(n));
    out.noise_sigma(j) = config.noise_rms_ratio * rms;
    if (out.noise_sigma(j) > 0) {
      Rng rng = make_rng(config.seed, Stream::kNoise, j);
      out.record.output.row(j) +=
          out.noise_sigma(j) * standard_normal(rng, n).transpose();
    }
  }
  return out;
}

SyntheticDataset synthesize_sdof_dataset(const GeneratorConfig& config) {
  ModelSpec truth{SdofLinear{config.frequency_law.mean, config.damping_true},
                  Excitation::kBaseAcceleration};
  GeneratorConfig c = config;
  c.parameter_law.reset();
  c.sensors = {0};
  c.quantity = Quantity::kDisplacement;
  return synthesize_dataset(truth, c);
}

}  // namespace hbuq
