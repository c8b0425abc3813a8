#include "hbuq/optimize.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "hbuq/error.hpp"

namespace hbuq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::optional<Evaluation> try_evaluate(const Objective& f, const VectorXd& x) {
  try {
    Evaluation e = f(x);
    if (!std::isfinite(e.value) || !e.gradient.allFinite()) return std::nullopt;
    return e;
  } catch (const Error& err) {
    if (err.kind() == ErrorKind::kNonPositiveDefinite) return std::nullopt;
    throw;
  }
}

MatrixXd inverse_of_seed(MatrixXd h) {
  const Eigen::Index n = h.rows();
  h = 0.5 * (h + h.transpose());
  // Diagonal rescaling keeps badly scaled parameters comparable before the
  // shift that enforces positive definiteness.
  VectorXd d = h.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt();
  MatrixXd scaled = d.cwiseInverse().asDiagonal() * h * d.cwiseInverse().asDiagonal();
  double shift = 0.0;
  for (int attempt = 0; attempt < 30; ++attempt) {
    Eigen::LLT<MatrixXd> llt(scaled + shift * MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      MatrixXd inv = llt.solve(MatrixXd::Identity(n, n));
      return d.cwiseInverse().asDiagonal() * inv * d.cwiseInverse().asDiagonal();
    }
    shift = shift == 0.0 ? 1e-10 : shift * 10.0;
  }
  return MatrixXd::Identity(n, n);
}

}  // namespace

BfgsResult minimize_bfgs(const Objective& objective, const VectorXd& x0,
                         const BfgsOptions& options, const CurvatureSeed& seed) {
  BfgsResult result;
  auto start = try_evaluate(objective, x0);
  require(start.has_value(), ErrorKind::kInfeasibleStart,
          "objective undefined at the starting point");

  const Eigen::Index n = x0.size();
  auto reseed = [&](const VectorXd& at) {
    return seed ? inverse_of_seed(seed(at)) : MatrixXd::Identity(n, n);
  };
  MatrixXd hinv = reseed(x0);

  VectorXd x = x0;
  Evaluation current = std::move(*start);
  bool fresh = true;
  bool scale_identity = !seed;

  auto converged_gradient = [&](const Evaluation& e) {
    return e.gradient.lpNorm<Eigen::Infinity>() <
           options.gradient_tolerance * (1.0 + std::abs(e.value));
  };

  result.trace.push_back(
      {current.value, current.gradient.lpNorm<Eigen::Infinity>()});
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter;
    if (converged_gradient(current)) {
      result.converged = true;
      result.stop_reason = "gradient";
      break;
    }
    VectorXd direction = -hinv * current.gradient;
    double slope = current.gradient.dot(direction);
    if (!(slope < 0)) {
      hinv = reseed(x);
      fresh = true;
      direction = -hinv * current.gradient;
      slope = current.gradient.dot(direction);
      if (!(slope < 0)) {
        result.stop_reason = "no descent direction";
        break;
      }
    }

    double alpha = 1.0;
    std::optional<Evaluation> trial;
    VectorXd x_new;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = x + alpha * direction;
      trial = try_evaluate(objective, x_new);
      if (trial && trial->value <= current.value + options.armijo * alpha * slope) {
        break;
      }
      if (trial && options.value_noise > 0 &&
          trial->value <= current.value + options.value_noise * (1.0 + std::abs(current.value)) &&
          trial->gradient.lpNorm<Eigen::Infinity>() <
              current.gradient.lpNorm<Eigen::Infinity>()) {
        break;
      }
      trial.reset();
      alpha *= 0.5;
    }

    if (!trial) {
      if (!fresh) {
        hinv = reseed(x);
        fresh = true;
        scale_identity = !seed;
        continue;
      }
      result.stop_reason = "line search failed";
      break;
    }

    const VectorXd s = x_new - x;
    const VectorXd y = trial->gradient - current.gradient;
    x = x_new;
    current = std::move(*trial);
    result.trace.push_back(
        {current.value, current.gradient.lpNorm<Eigen::Infinity>()});

    // Step length in the metric of the current curvature estimate.
    const double scaled_step =
        std::sqrt((s.array().square() / hinv.diagonal().array().abs()).sum());
    if (scaled_step < options.step_tolerance) {
      result.converged = true;
      result.stop_reason = "step";
      result.iterations = iter + 1;
      break;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (scale_identity) {
        hinv *= sy / y.squaredNorm();
        scale_identity = false;
      }
      const double rho = 1.0 / sy;
      const VectorXd hy = hinv * y;
      hinv += (rho * rho * y.dot(hy) + rho) * s * s.transpose() -
              rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
    result.iterations = iter + 1;
  }
  if (!result.converged && result.stop_reason.empty()) {
    result.stop_reason = "max iterations";
    if (converged_gradient(current)) {
      result.converged = true;
      result.stop_reason = "gradient";
    }
  }
  result.x = std::move(x);
  result.value = current.value;
  result.gradient = std::move(current.gradient);
  return result;
}

}  // namespace hbuq
