#include "hbuq/hyper.hpp"

#include <algorithm>
#include <cmath>

#include "hbuq/error.hpp"

namespace hbuq {

namespace {

void check_summaries(Summaries summaries, Index min_count) {
  require(static_cast<Index>(summaries.size()) >= min_count,
          ErrorKind::kTooFewSegments,
          "need at least " + std::to_string(min_count) + " segments, got " +
              std::to_string(summaries.size()));
  const Index n = summaries.front().theta.size();
  for (const auto& s : summaries) {
    require(s.theta.size() == n && s.covariance.rows() == n &&
                s.covariance.cols() == n,
            ErrorKind::kDimensionMismatch, "segment summaries disagree in size");
  }
}

Eigen::LLT<MatrixXd> factor(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  require(llt.info() == Eigen::Success, ErrorKind::kNonPositiveDefinite,
          "covariance sum is not positive definite");
  return llt;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<long>(mid)));
  }
  return m;
}

}  // namespace

VectorXd HyperParameters::standard_deviations() const {
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

MatrixXd HyperParameters::correlation() const {
  const VectorXd sd = standard_deviations();
  const Index n = sd.size();
  MatrixXd r = MatrixXd::Identity(n, n);
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) {
      if (p != q && sd(p) > 0 && sd(q) > 0) {
        r(p, q) = covariance(p, q) / (sd(p) * sd(q));
      }
    }
  }
  return r;
}

MatrixXd spd_floor(const MatrixXd& m) {
  const MatrixXd sym = 0.5 * (m + m.transpose());
  const double tau = 1e-10 * std::max(sym.trace(), 1.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const VectorXd ev = es.eigenvalues().cwiseMax(tau);
  MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

MatrixXd reference_covariance(Summaries summaries, std::optional<Index> index) {
  check_summaries(summaries, 1);
  if (index) {
    require(*index >= 0 && *index < static_cast<Index>(summaries.size()),
            ErrorKind::kInvalidConfig, "reference segment index out of range");
    return summaries[static_cast<std::size_t>(*index)].covariance;
  }
  const Index n = summaries.front().theta.size();
  VectorXd sd(n);
  for (Index p = 0; p < n; ++p) {
    std::vector<double> v;
    for (const auto& s : summaries) v.push_back(s.covariance(p, p));
    sd(p) = std::sqrt(std::max(median(v), 0.0));
  }
  MatrixXd out(n, n);
  for (Index p = 0; p < n; ++p) {
    out(p, p) = sd(p) * sd(p);
    for (Index q = p + 1; q < n; ++q) {
      std::vector<double> v;
      for (const auto& s : summaries) {
        const double d = std::sqrt(s.covariance(p, p) * s.covariance(q, q));
        v.push_back(d > 0 ? s.covariance(p, q) / d : 0.0);
      }
      out(p, q) = out(q, p) = median(v) * sd(p) * sd(q);
    }
  }
  return out;
}

HyperParameters init_hyper(Summaries summaries,
                           std::optional<Index> reference_index) {
  check_summaries(summaries, 2);
  const Index n = summaries.front().theta.size();
  const double count = static_cast<double>(summaries.size());
  HyperParameters h;
  h.mean = VectorXd::Zero(n);
  for (const auto& s : summaries) h.mean += s.theta;
  h.mean /= count;
  MatrixXd spread = MatrixXd::Zero(n, n);
  for (const auto& s : summaries) {
    const VectorXd d = h.mean - s.theta;
    spread.noalias() += d * d.transpose();
  }
  spread /= count;
  h.covariance = spd_floor(spread - reference_covariance(summaries, reference_index));
  return h;
}

double hyper_neg_log_posterior(const VectorXd& mean, const MatrixXd& covariance,
                               Summaries summaries) {
  check_summaries(summaries, 1);
  double value = 0.0;
  for (const auto& s : summaries) {
    const auto llt = factor(covariance + s.covariance);
    const VectorXd r = mean - s.theta;
    const MatrixXd& l = llt.matrixLLT();
    value += l.diagonal().array().log().sum();  // 1/2 ln det
    value += 0.5 * r.dot(llt.solve(r));
  }
  return value;
}

HyperGradient hyper_gradient(const VectorXd& mean, const MatrixXd& covariance,
                             Summaries summaries) {
  check_summaries(summaries, 1);
  const Index n = mean.size();
  HyperGradient g{VectorXd::Zero(n), MatrixXd::Zero(n, n)};
  for (const auto& s : summaries) {
    const auto llt = factor(covariance + s.covariance);
    const MatrixXd inv = llt.solve(MatrixXd::Identity(n, n));
    const VectorXd w = inv * (mean - s.theta);
    g.mean += w;
    g.covariance += 0.5 * (inv - w * w.transpose());
  }
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  return g;
}

std::vector<MatrixXd> profile_weights(const MatrixXd& covariance,
                                      Summaries summaries) {
  check_summaries(summaries, 1);
  const Index n = covariance.rows();
  std::vector<MatrixXd> inverses;
  MatrixXd total = MatrixXd::Zero(n, n);
  for (const auto& s : summaries) {
    inverses.push_back(factor(covariance + s.covariance).solve(MatrixXd::Identity(n, n)));
    total += inverses.back();
  }
  const auto total_llt = factor(0.5 * (total + total.transpose()));
  for (auto& m : inverses) m = total_llt.solve(m);
  return inverses;
}

VectorXd profile_mu(const MatrixXd& covariance, Summaries summaries) {
  check_summaries(summaries, 1);
  const Index n = covariance.rows();
  MatrixXd total = MatrixXd::Zero(n, n);
  VectorXd rhs = VectorXd::Zero(n);
  for (const auto& s : summaries) {
    const auto llt = factor(covariance + s.covariance);
    total += llt.solve(MatrixXd::Identity(n, n));
    rhs += llt.solve(s.theta);
  }
  return factor(0.5 * (total + total.transpose())).solve(rhs);
}

VectorXd encode_log_cholesky(const MatrixXd& covariance) {
  const Index n = covariance.rows();
  const MatrixXd l = factor(covariance).matrixL();
  VectorXd out(n * (n + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      out(k++) = i == j ? std::log(l(i, i)) : l(i, j);
    }
  }
  return out;
}

namespace {

MatrixXd decode_factor(const VectorXd& encoded, Index n) {
  require(encoded.size() == n * (n + 1) / 2, ErrorKind::kDimensionMismatch,
          "log-Cholesky vector has wrong length");
  MatrixXd l = MatrixXd::Zero(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      l(i, j) = i == j ? std::exp(encoded(k)) : encoded(k);
      ++k;
    }
  }
  return l;
}

}  // namespace

MatrixXd decode_log_cholesky(const VectorXd& encoded, Index n) {
  const MatrixXd l = decode_factor(encoded, n);
  return l * l.transpose();
}

VectorXd log_cholesky_gradient(const VectorXd& encoded,
                               const MatrixXd& d_covariance) {
  const Index n = d_covariance.rows();
  const MatrixXd l = decode_factor(encoded, n);
  const MatrixXd sym = 0.5 * (d_covariance + d_covariance.transpose());
  const MatrixXd d_factor = 2.0 * sym * l;
  VectorXd out(encoded.size());
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      out(k++) = i == j ? d_factor(i, i) * l(i, i) : d_factor(i, j);
    }
  }
  return out;
}

HyperResult optimize_hyper(Summaries summaries, const HyperOptions& options,
                           const std::optional<HyperParameters>& init) {
  check_summaries(summaries, 2);
  const Index n = summaries.front().theta.size();
  HyperResult result;
  result.reference_covariance =
      reference_covariance(summaries, options.reference_index);
  result.initial = init ? *init : init_hyper(summaries, options.reference_index);

  Objective objective = [&](const VectorXd& x) {
    const MatrixXd cov = decode_log_cholesky(x, n);
    const VectorXd mu = profile_mu(cov, summaries);
    Evaluation e;
    e.value = hyper_neg_log_posterior(mu, cov, summaries);
    // At the profiled mean the mean-gradient vanishes, so only the
    // covariance part contributes.
    e.gradient = log_cholesky_gradient(x, hyper_gradient(mu, cov, summaries).covariance);
    return e;
  };

  BfgsOptions bfgs;
  bfgs.gradient_tolerance = options.gradient_tolerance;
  bfgs.step_tolerance = options.step_tolerance;
  bfgs.max_iterations = options.max_iterations;
  const BfgsResult r = minimize_bfgs(
      objective, encode_log_cholesky(spd_floor(result.initial.covariance)), bfgs);

  result.map.covariance = decode_log_cholesky(r.x, n);
  result.map.mean = profile_mu(result.map.covariance, summaries);
  result.objective = r.value;
  result.converged = r.converged;
  result.iterations = r.iterations;
  result.stop_reason = r.stop_reason;
  result.trace = r.trace;
  return result;
}

}  // namespace hbuq
