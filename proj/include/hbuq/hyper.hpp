#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hbuq/optimize.hpp"

namespace hbuq {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Gaussian summary of one segment: MAP and marginal covariance of theta.
struct GaussianSummary {
  VectorXd theta;
  MatrixXd covariance;
};

/// Mean and covariance of the population distribution of theta.
struct HyperParameters {
  VectorXd mean;
  MatrixXd covariance;

  VectorXd standard_deviations() const;
  MatrixXd correlation() const;
};

using Summaries = std::span<const GaussianSummary>;

/// Raises eigenvalues below 1e-10 * max(trace, 1) to that floor.
MatrixXd spd_floor(const MatrixXd& m);

/// Covariance standing in for every segment in the closed-form initializer.
/// With an index, that segment's covariance; otherwise element-wise medians
/// of the variances and of the correlations.
MatrixXd reference_covariance(Summaries summaries,
                              std::optional<Index> index = {});

/// Mean of the MAPs, and their second moment about it minus the reference
/// covariance, eigen-floored to SPD.
HyperParameters init_hyper(Summaries summaries,
                           std::optional<Index> reference_index = {});

/// 1/2 sum ln|S + S_i| + 1/2 sum (mu - t_i)^T (S + S_i)^-1 (mu - t_i).
double hyper_neg_log_posterior(const VectorXd& mean, const MatrixXd& covariance,
                               Summaries summaries);

struct HyperGradient {
  VectorXd mean;
  MatrixXd covariance;  // symmetric; entries treated as free
};

HyperGradient hyper_gradient(const VectorXd& mean, const MatrixXd& covariance,
                             Summaries summaries);

/// Weighting matrices [sum_i A_i^-1]^-1 A_i^-1 with A_i = S + S_i.
std::vector<MatrixXd> profile_weights(const MatrixXd& covariance,
                                      Summaries summaries);

/// Mean minimising the objective for a fixed covariance.
VectorXd profile_mu(const MatrixXd& covariance, Summaries summaries);

/// Lower-triangular Cholesky factor, column-major, with the diagonal stored
/// as its logarithm; n(n+1)/2 entries.
VectorXd encode_log_cholesky(const MatrixXd& covariance);
MatrixXd decode_log_cholesky(const VectorXd& encoded, Index n);

/// Gradient in log-Cholesky coordinates from a symmetric dL/dSigma.
VectorXd log_cholesky_gradient(const VectorXd& encoded,
                               const MatrixXd& d_covariance);

struct HyperOptions {
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-14;
  int max_iterations = 2000;
  std::optional<Index> reference_index;
};

struct HyperResult {
  HyperParameters map;
  HyperParameters initial;
  MatrixXd reference_covariance;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string stop_reason;
  std::vector<BfgsTraceEntry> trace;
};

/// Minimises the profiled objective over the log-Cholesky encoding of the
/// covariance, starting from init_hyper unless an initial point is given.
HyperResult optimize_hyper(Summaries summaries, const HyperOptions& options = {},
                           const std::optional<HyperParameters>& init = {});

}  // namespace hbuq
