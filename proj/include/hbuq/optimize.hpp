#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hbuq {

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

using Objective = std::function<Evaluation(const Eigen::VectorXd&)>;

/// Returns a positive-definite Hessian approximation at x; used to seed (and
/// re-seed) the inverse-Hessian estimate.
using CurvatureSeed = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct BfgsOptions {
  double gradient_tolerance = 1e-8;  // relative to 1 + |f|, infinity norm
  double step_tolerance = 1e-10;     // scaled step, see below
  int max_iterations = 500;
  double armijo = 1e-4;
  int max_backtracks = 60;
  // Steps that leave f unchanged within this relative amount are accepted
  // when they reduce the gradient; this lets badly conditioned problems reach
  // the gradient tolerance once f stops resolving the remaining decrease.
  // Zero keeps the trace strictly Armijo-monotone.
  double value_noise = 0.0;
};

struct BfgsTraceEntry {
  double value;
  double gradient_norm;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  bool converged = false;
  int iterations = 0;
  std::string stop_reason;
  std::vector<BfgsTraceEntry> trace;
};

/// BFGS on the inverse Hessian with a backtracking Armijo line search.
/// Trial points where the objective throws hbuq::Error are treated as
/// infeasible and the step is shortened. Step lengths for the step test are
/// divided by the square root of the inverse-Hessian diagonal, so the test
/// means the same thing for parameters of very different scale.
BfgsResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0,
                         const BfgsOptions& options,
                         const CurvatureSeed& seed = {});

}  // namespace hbuq
