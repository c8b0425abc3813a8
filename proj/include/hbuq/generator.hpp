#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "hbuq/record.hpp"

namespace hbuq {

struct FrequencyLaw {
  double mean = 1.0 / (2.0 * std::numbers::pi);      // Hz
  double std = 1.0 / (200.0 * std::numbers::pi);     // Hz
  double redraw_block = 50.0;                        // s
};

/// Multivariate Gaussian law for per-block parameter vectors; used instead of
/// the frequency law for models with more than one parameter.
struct ParameterLaw {
  VectorXd mean;
  MatrixXd covariance;
};

struct GeneratorConfig {
  double spectral_power = 0.0013;  // two-sided, per rad/s
  double dt = 0.005;
  double duration = 2000.0;
  double noise_rms_ratio = 0.01;
  FrequencyLaw frequency_law;
  double damping_true = 0.05;
  std::uint64_t seed = 0;

  std::optional<ParameterLaw> parameter_law;
  std::vector<Index> sensors{0};
  Quantity quantity = Quantity::kDisplacement;
};

/// Throws kInvalidConfig.
void validate(const GeneratorConfig& config);

Index sample_count(const GeneratorConfig& config);

/// Gaussian white noise with variance 2 pi S0 / dt per sample.
VectorXd generate_gwn(double spectral_power, double dt, Index n,
                      std::uint64_t seed);

/// The configured parameter law, or the scalar frequency law.
ParameterLaw parameter_law(const ModelSpec& truth, const GeneratorConfig& config);

/// True parameters of redraw block `block`; infeasible draws are redrawn.
VectorXd sample_block_parameters(const ModelSpec& truth,
                                 const GeneratorConfig& config, Index block);

struct SyntheticDataset {
  TimeHistoryRecord record;
  MatrixXd clean_output;       // N_o x n, noise-free
  MatrixXd block_parameters;   // N_theta x blocks, true parameters per block
  Index block_samples = 0;
  VectorXd noise_sigma;        // per output channel
  MatrixXd block_states;       // 2 N_DOF x blocks, true state at block start
};

/// Generic generator: GWN base input, parameters redrawn every redraw_block
/// seconds from the parameter law, state carried across block boundaries,
/// additive Gaussian measurement noise at the requested RMS ratio.
SyntheticDataset synthesize_dataset(const ModelSpec& truth,
                                    const GeneratorConfig& config);

/// SDOF experiment: natural frequency drawn from the frequency law, true
/// damping damping_true, relative displacement observed.
SyntheticDataset synthesize_sdof_dataset(const GeneratorConfig& config);

}  // namespace hbuq
