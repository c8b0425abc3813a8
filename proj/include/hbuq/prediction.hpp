#pragma once

#include <cstdint>
#include <vector>

#include "hbuq/hyper.hpp"
#include "hbuq/response.hpp"

namespace hbuq {

struct ParameterDraws {
  std::vector<VectorXd> samples;
  Index rejected = 0;
};

/// i.i.d. draws from N(mean, covariance) through its Cholesky factor. Draws
/// the model cannot assemble (non-positive stiffness, negative damping) are
/// rejected and redrawn; more than 50% rejections raise kExcessiveRejection.
ParameterDraws sample_parameters(const HyperParameters& hyper, Index count,
                                 std::uint64_t seed, const ModelSpec& spec);

/// Same without a feasibility check.
ParameterDraws sample_parameters(const HyperParameters& hyper, Index count,
                                 std::uint64_t seed);

/// 2 alpha0 / (2 alpha0 - 2) * beta0 / alpha0: variance of the Student-t
/// prediction error with 2 alpha0 degrees of freedom and scale^2 beta0/alpha0.
double noise_variance(double alpha0, double beta0);

struct QuantityMoments {
  MatrixXd mean;                     // N_DOF x n
  std::vector<MatrixXd> covariance;  // n matrices of N_DOF x N_DOF

  MatrixXd variance() const;         // N_DOF x n diagonal entries
};

struct PredictiveSummary {
  double dt = 0.0;
  QuantityMoments displacement;
  QuantityMoments velocity;
  QuantityMoments acceleration;

  const QuantityMoments& of(Quantity q) const;
};

struct PredictionSetup {
  ModelSpec spec;
  InitialConditions initial;
  MatrixXd input;  // N_I x n
  double dt = 0.0;
  double alpha0 = 2.0;
  double beta0 = 0.0;
  int workers = 1;
};

/// Sample mean of the model responses, and the sample second moment plus the
/// prediction-error variance times identity minus the mean outer product.
PredictiveSummary predictive_moments(const std::vector<VectorXd>& samples,
                                     const PredictionSetup& setup);

/// Student-t density with nu degrees of freedom, location mu, scale^2 s2.
double student_t_density(double x, double mu, double s2, double nu);

/// Equal-weight mixture over samples of products over channels of Student-t
/// densities with 2 alpha0 degrees of freedom and scale^2 beta0 / alpha0,
/// evaluated at sample `step` of the given quantity.
double predictive_density(const VectorXd& w, Index step,
                          const std::vector<VectorXd>& samples,
                          const PredictionSetup& setup,
                          Quantity quantity = Quantity::kDisplacement);

struct CredibleBand {
  MatrixXd lower;  // N_DOF x n
  MatrixXd upper;
};

/// Two-sided standard-normal quantile for the given central probability.
double normal_band_multiplier(double level);

CredibleBand credible_band(const QuantityMoments& moments, double level);

}  // namespace hbuq
