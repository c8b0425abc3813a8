#include "hbuq/segment.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "hbuq/optimize.hpp"
#include "hbuq/random.hpp"

namespace hbuq {

namespace {

void check_segment(const TimeHistoryRecord& segment, const ModelSpec& spec) {
  check_record(segment, dof_count(spec));
  require(segment.input_channels() == input_count(spec),
          ErrorKind::kDimensionMismatch,
          "segment has " + std::to_string(segment.input_channels()) +
              " input channels, model expects " +
              std::to_string(input_count(spec)));
}

VectorXd floors_of(const TimeHistoryRecord& segment) {
  VectorXd floors(segment.output_channels());
  for (Index j = 0; j < floors.size(); ++j) {
    floors(j) = sum_squares_floor(segment.output.row(j).transpose());
  }
  return floors;
}

MatrixXd gauss_newton(const SegmentEvaluation& e, Index samples) {
  const Index p = e.jacobian.empty() ? 0 : e.jacobian.front().cols();
  MatrixXd h = MatrixXd::Zero(p, p);
  const double n = static_cast<double>(samples);
  for (std::size_t j = 0; j < e.jacobian.size(); ++j) {
    const double s = e.sum_squares(static_cast<Index>(j));
    const MatrixXd& jac = e.jacobian[j];
    const VectorXd g = jac.transpose() * e.errors.row(static_cast<Index>(j)).transpose();
    h.noalias() += (n / s) * (jac.transpose() * jac);
    h.noalias() -= (2.0 * n / (s * s)) * (g * g.transpose());
  }
  return 0.5 * (h + h.transpose());
}

double condition_number(const MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / lo;
}

}  // namespace

double sum_squares_floor(const Eigen::Ref<const VectorXd>& channel) {
  const double n = static_cast<double>(channel.size());
  if (channel.size() == 0) return 0.0;
  const double mean = channel.mean();
  const double var = (channel.array() - mean).square().sum() / n;
  return std::numeric_limits<double>::epsilon() * n * var;
}

MatrixXd prediction_errors(const TimeHistoryRecord& segment,
                           const ModelSpec& spec, const VectorXd& theta,
                           const VectorXd& psi) {
  check_segment(segment, spec);
  const ObservedResponse model =
      observed_response(spec, theta, psi, segment.input, segment.dt,
                        segment.sensors, segment.quantity, false);
  return segment.output - model.output;
}

double jeffreys_neg_log_likelihood(const MatrixXd& errors,
                                   const VectorXd& floors) {
  const double n = static_cast<double>(errors.cols());
  double value = 0.0;
  for (Index j = 0; j < errors.rows(); ++j) {
    const double s = errors.row(j).squaredNorm();
    if (floors.size() > 0) {
      require(s >= floors(j) && s > 0.0, ErrorKind::kDegenerateFit,
              "channel " + std::to_string(j + 1) +
                  " sum of squared errors below floor");
    }
    value += std::log(s);
  }
  return 0.5 * n * value;
}

SegmentEvaluation evaluate_segment(const TimeHistoryRecord& segment,
                                   const ModelSpec& spec,
                                   const VectorXd& theta, const VectorXd& psi) {
  check_segment(segment, spec);
  ObservedResponse model =
      observed_response(spec, theta, psi, segment.input, segment.dt,
                        segment.sensors, segment.quantity, true);
  SegmentEvaluation e;
  e.errors = segment.output - model.output;
  e.value = jeffreys_neg_log_likelihood(e.errors, floors_of(segment));
  e.sum_squares = e.errors.rowwise().squaredNorm();
  const double n = static_cast<double>(segment.samples());
  e.gradient = VectorXd::Zero(model.jacobian.empty() ? 0 : model.jacobian[0].cols());
  for (std::size_t j = 0; j < model.jacobian.size(); ++j) {
    const Index jj = static_cast<Index>(j);
    e.gradient.noalias() -= (n / e.sum_squares(jj)) *
                            (model.jacobian[j].transpose() * e.errors.row(jj).transpose());
  }
  e.jacobian = std::move(model.jacobian);
  return e;
}

double segment_neg_log_likelihood(const TimeHistoryRecord& segment,
                                  const ModelSpec& spec, const VectorXd& theta,
                                  const VectorXd& psi) {
  return jeffreys_neg_log_likelihood(
      prediction_errors(segment, spec, theta, psi), floors_of(segment));
}

VectorXd segment_gradient(const TimeHistoryRecord& segment,
                          const ModelSpec& spec, const VectorXd& theta,
                          const VectorXd& psi) {
  return evaluate_segment(segment, spec, theta, psi).gradient;
}

MapEstimate map_segment(const TimeHistoryRecord& segment, const ModelSpec& spec,
                        const VectorXd& theta0, const VectorXd& psi0,
                        const MapOptions& options) {
  check_segment(segment, spec);
  const Index nt = parameter_count(spec);
  const Index np = 2 * dof_count(spec);
  require(theta0.size() == nt && psi0.size() == np,
          ErrorKind::kDimensionMismatch, "starting point has wrong dimension");
  try {
    (void)assemble_matrices<double>(spec, theta0);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNonPositiveDefinite) {
      throw Error(ErrorKind::kInfeasibleStart, e.what());
    }
    throw;
  }

  auto split = [&](const VectorXd& x) -> std::pair<VectorXd, VectorXd> {
    if (options.estimate_psi) return {x.head(nt), x.tail(np)};
    return {x, psi0};
  };
  Objective objective = [&](const VectorXd& x) {
    auto [theta, psi] = split(x);
    SegmentEvaluation e = evaluate_segment(segment, spec, theta, psi);
    Evaluation out{e.value, std::move(e.gradient)};
    if (!options.estimate_psi) out.gradient.conservativeResize(nt);
    return out;
  };
  CurvatureSeed seed = [&](const VectorXd& x) {
    auto [theta, psi] = split(x);
    const SegmentEvaluation e = evaluate_segment(segment, spec, theta, psi);
    MatrixXd h = gauss_newton(e, segment.samples());
    if (!options.estimate_psi) return MatrixXd(h.topLeftCorner(nt, nt));
    return h;
  };

  BfgsOptions bfgs;
  bfgs.gradient_tolerance = options.gradient_tolerance;
  bfgs.step_tolerance = options.step_tolerance;
  bfgs.max_iterations = options.max_iterations;
  bfgs.value_noise = 1e-12;

  Rng rng = make_rng(options.seed, Stream::kMultistart);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  MapEstimate best;
  bool have_best = false;
  double best_any = std::numeric_limits<double>::infinity();
  std::string last_reason;
  for (int s = 0; s < std::max(1, options.starts); ++s) {
    VectorXd theta = theta0;
    if (s > 0) {
      for (Index i = 0; i < nt; ++i) {
        theta(i) *= 1.0 + options.jitter * unit(rng);
      }
    }
    VectorXd x0 = theta;
    if (options.estimate_psi) {
      x0.conservativeResize(nt + np);
      x0.tail(np) = psi0;
    }
    BfgsResult r;
    try {
      r = minimize_bfgs(objective, x0, bfgs, seed);
    } catch (const Error& e) {
      if (s == 0 || e.kind() != ErrorKind::kInfeasibleStart) throw;
      continue;
    }
    // Near the optimum the objective is resolved only to about 1e-12
    // relative, so the line search stalls before the gradient vanishes.
    // Newton steps on the curvature seed drive the gradient instead.
    if (r.converged) {
      const double tol = bfgs.gradient_tolerance * (1.0 + std::abs(r.value));
      for (int k = 0; k < 8 && r.gradient.lpNorm<Eigen::Infinity>() >= tol; ++k) {
        Eigen::LDLT<MatrixXd> ldlt(seed(r.x));
        if (ldlt.info() != Eigen::Success) break;
        const VectorXd x = r.x - ldlt.solve(r.gradient);
        Evaluation e;
        try {
          e = objective(x);
        } catch (const Error&) {
          break;
        }
        if (!std::isfinite(e.value) ||
            e.value > r.value + 1e-10 * (1.0 + std::abs(r.value)) ||
            e.gradient.lpNorm<Eigen::Infinity>() >=
                r.gradient.lpNorm<Eigen::Infinity>()) {
          break;
        }
        r.x = x;
        r.value = e.value;
        r.gradient = std::move(e.gradient);
      }
    }
    best_any = std::min(best_any, r.value);
    last_reason = r.stop_reason;
    if (!r.converged) continue;
    if (!have_best || r.value < best.objective) {
      auto [t, p] = split(r.x);
      best.theta = std::move(t);
      best.psi = std::move(p);
      best.objective = r.value;
      best.converged = true;
      best.iterations = r.iterations;
      best.gradient_norm = r.gradient.lpNorm<Eigen::Infinity>();
      best.best_start = s;
      best.stop_reason = r.stop_reason;
      have_best = true;
    }
  }
  require(have_best, ErrorKind::kNonConvergence,
          "no start converged (best objective " + std::to_string(best_any) +
              ", last stop: " + last_reason + ")");
  return best;
}

MatrixXd HessianBlocks::full() const {
  const Index nt = theta_theta.rows();
  const Index np = psi_psi.rows();
  MatrixXd h(nt + np, nt + np);
  h.topLeftCorner(nt, nt) = theta_theta;
  h.topRightCorner(nt, np) = theta_psi;
  h.bottomLeftCorner(np, nt) = theta_psi.transpose();
  h.bottomRightCorner(np, np) = psi_psi;
  return h;
}

HessianBlocks HessianBlocks::from_full(const MatrixXd& h, Index n_theta) {
  const Index np = h.rows() - n_theta;
  return {h.topLeftCorner(n_theta, n_theta), h.topRightCorner(n_theta, np),
          h.bottomRightCorner(np, np)};
}

HessianBlocks hessian_segment(const TimeHistoryRecord& segment,
                              const ModelSpec& spec, const VectorXd& theta,
                              const VectorXd& psi, HessianMethod method,
                              bool psi_fixed) {
  const Index nt = theta.size();
  const SegmentEvaluation e = evaluate_segment(segment, spec, theta, psi);
  MatrixXd gn = gauss_newton(e, segment.samples());
  if (psi_fixed) gn = MatrixXd(gn.topLeftCorner(nt, nt));
  MatrixXd h = gn;

  if (method == HessianMethod::kFiniteDifference) {
    const Index p = gn.rows();
    VectorXd x(nt + psi.size());
    x << theta, psi;
    auto grad = [&](const VectorXd& xx) {
      VectorXd g = evaluate_segment(segment, spec, xx.head(nt),
                                    xx.tail(psi.size()))
                       .gradient;
      return psi_fixed ? VectorXd(g.head(nt)) : g;
    };
    h.resize(p, p);
    for (Index i = 0; i < p; ++i) {
      // Step of 1e-3 posterior standard deviations.
      double step = gn(i, i) > 0 ? 1e-3 / std::sqrt(gn(i, i))
                                 : 1e-6 * std::max(1.0, std::abs(x(i)));
      VectorXd xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      h.col(i) = (grad(xp) - grad(xm)) / (2.0 * step);
    }
    h = 0.5 * (h + h.transpose());
  }

  Eigen::LLT<MatrixXd> llt(h);
  require(llt.info() == Eigen::Success, ErrorKind::kIndefiniteHessian,
          "Hessian at the MAP is not positive definite");
  return HessianBlocks::from_full(h, nt);
}

MatrixXd marginal_theta_covariance(const HessianBlocks& h) {
  constexpr double kMaxCondition = 1e12;
  MatrixXd schur = h.theta_theta;
  if (h.psi_psi.size() > 0) {
    require(condition_number(h.psi_psi) <= kMaxCondition,
            ErrorKind::kSingularBlock, "H_psi_psi is numerically singular");
    const Eigen::LDLT<MatrixXd> ldlt(h.psi_psi);
    schur -= h.theta_psi * ldlt.solve(h.theta_psi.transpose());
  }
  schur = 0.5 * (schur + schur.transpose());
  require(condition_number(schur) <= kMaxCondition, ErrorKind::kSingularBlock,
          "Schur complement is numerically singular");
  const Eigen::LDLT<MatrixXd> ldlt(schur);
  MatrixXd cov = ldlt.solve(MatrixXd::Identity(schur.rows(), schur.cols()));
  cov = 0.5 * (cov + cov.transpose());
  Eigen::LLT<MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, ErrorKind::kSingularBlock,
          "marginal covariance is not positive definite");
  return cov;
}

SegmentPosterior infer_segment(const TimeHistoryRecord& segment,
                               const ModelSpec& spec, const VectorXd& theta0,
                               const VectorXd& psi0, const MapOptions& options) {
  const MapEstimate map = map_segment(segment, spec, theta0, psi0, options);
  SegmentPosterior post;
  post.theta = map.theta;
  post.psi = map.psi;
  post.converged = map.converged;
  post.objective = map.objective;
  post.iterations = map.iterations;
  post.gradient_norm = map.gradient_norm;
  post.stop_reason = map.stop_reason;
  const bool psi_fixed = !options.estimate_psi;
  try {
    post.hessian = hessian_segment(segment, spec, map.theta, map.psi,
                                   HessianMethod::kGaussNewton, psi_fixed);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kIndefiniteHessian) throw;
    post.hessian = hessian_segment(segment, spec, map.theta, map.psi,
                                   HessianMethod::kFiniteDifference, psi_fixed);
    post.hessian_method = HessianMethod::kFiniteDifference;
  }
  post.theta_covariance = marginal_theta_covariance(post.hessian);
  return post;
}

}  // namespace hbuq
