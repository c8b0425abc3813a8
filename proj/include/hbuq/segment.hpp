#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbuq/record.hpp"
#include "hbuq/response.hpp"

namespace hbuq {

/// eps * n * var(y): sums of squared errors below this mean the model
/// interpolates the channel.
double sum_squares_floor(const Eigen::Ref<const VectorXd>& channel);

/// Y - S_o X(theta, psi), N_o x n.
MatrixXd prediction_errors(const TimeHistoryRecord& segment,
                           const ModelSpec& spec, const VectorXd& theta,
                           const VectorXd& psi);

/// (n/2) sum_j ln S_j with S_j = sum_k e_jk^2. floors may be empty (no
/// check); otherwise S_j < floors(j) raises kDegenerateFit.
double jeffreys_neg_log_likelihood(const MatrixXd& errors,
                                   const VectorXd& floors = {});

/// Objective with the prediction-error variances integrated out against the
/// Jeffreys prior. The additive constant is zero.
double segment_neg_log_likelihood(const TimeHistoryRecord& segment,
                                  const ModelSpec& spec, const VectorXd& theta,
                                  const VectorXd& psi);

/// Gradient over [theta; psi].
VectorXd segment_gradient(const TimeHistoryRecord& segment,
                          const ModelSpec& spec, const VectorXd& theta,
                          const VectorXd& psi);

/// Value, gradient and the pieces the Hessian needs, from a single pass.
struct SegmentEvaluation {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd errors;                // N_o x n
  VectorXd sum_squares;           // S_j
  std::vector<MatrixXd> jacobian; // d(model output_j)/d[theta; psi], n x P
};

SegmentEvaluation evaluate_segment(const TimeHistoryRecord& segment,
                                   const ModelSpec& spec,
                                   const VectorXd& theta, const VectorXd& psi);

struct MapOptions {
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  int max_iterations = 500;
  int starts = 3;
  double jitter = 0.10;  // relative half-width on theta for extra starts
  std::uint64_t seed = 0;
  bool estimate_psi = true;  // false: psi held at its starting value
};

struct MapEstimate {
  VectorXd theta;
  VectorXd psi;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  int best_start = 0;
  std::string stop_reason;
};

/// Multi-start quasi-Newton minimisation of the segment objective. Start 0 is
/// theta0 itself; further starts jitter theta0 uniformly by +-jitter.
MapEstimate map_segment(const TimeHistoryRecord& segment, const ModelSpec& spec,
                        const VectorXd& theta0, const VectorXd& psi0,
                        const MapOptions& options = {});

enum class HessianMethod { kGaussNewton, kFiniteDifference };

struct HessianBlocks {
  MatrixXd theta_theta;
  MatrixXd theta_psi;
  MatrixXd psi_psi;

  MatrixXd full() const;
  static HessianBlocks from_full(const MatrixXd& h, Index n_theta);
};

/// psi_fixed: curvature over theta only (psi treated as known).
HessianBlocks hessian_segment(const TimeHistoryRecord& segment,
                              const ModelSpec& spec, const VectorXd& theta,
                              const VectorXd& psi,
                              HessianMethod method = HessianMethod::kGaussNewton,
                              bool psi_fixed = false);

/// (H_tt - H_tp H_pp^-1 H_tp^T)^-1.
MatrixXd marginal_theta_covariance(const HessianBlocks& h);

struct SegmentPosterior {
  VectorXd theta;
  VectorXd psi;
  HessianBlocks hessian;
  MatrixXd theta_covariance;
  bool converged = false;
  double objective = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::string stop_reason;
  HessianMethod hessian_method = HessianMethod::kGaussNewton;
};

/// MAP, Hessian at the MAP (Gauss-Newton, falling back to finite differences
/// when indefinite) and the marginal theta covariance.
SegmentPosterior infer_segment(const TimeHistoryRecord& segment,
                               const ModelSpec& spec, const VectorXd& theta0,
                               const VectorXd& psi0,
                               const MapOptions& options = {});

}  // namespace hbuq
