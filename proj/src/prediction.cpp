#include "hbuq/prediction.hpp"

#include <cmath>
#include <numbers>

#include "hbuq/parallel.hpp"
#include "hbuq/random.hpp"

namespace hbuq {

namespace {

MatrixXd covariance_factor(const MatrixXd& covariance) {
  const Eigen::LLT<MatrixXd> llt(covariance);
  require(llt.info() == Eigen::Success, ErrorKind::kNonPositiveDefinite,
          "hyper covariance is not positive definite");
  return llt.matrixL();
}

bool feasible(const ModelSpec& spec, const VectorXd& theta) {
  try {
    (void)assemble_matrices<double>(spec, theta);
    return true;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNonPositiveDefinite) return false;
    throw;
  }
}

ParameterDraws draw(const HyperParameters& hyper, Index count,
                    std::uint64_t seed, const ModelSpec* spec) {
  require(count >= 1, ErrorKind::kInvalidConfig, "sample count must be >= 1");
  const MatrixXd l = covariance_factor(hyper.covariance);
  Rng rng = make_rng(seed, Stream::kPrediction);
  ParameterDraws out;
  out.samples.reserve(static_cast<std::size_t>(count));
  while (static_cast<Index>(out.samples.size()) < count) {
    VectorXd theta = hyper.mean + l * standard_normal(rng, hyper.mean.size());
    if (spec && !feasible(*spec, theta)) {
      ++out.rejected;
      require(out.rejected <= count, ErrorKind::kExcessiveRejection,
              "more than half of the parameter draws are infeasible");
      continue;
    }
    out.samples.push_back(std::move(theta));
  }
  const double total = static_cast<double>(count + out.rejected);
  require(static_cast<double>(out.rejected) <= 0.5 * total,
          ErrorKind::kExcessiveRejection,
          "more than half of the parameter draws are infeasible");
  return out;
}

// Outer products are taken about the first sample so the covariance does not
// suffer cancellation; with one sample (or identical samples) it is exactly 0.
struct Accumulator {
  MatrixXd sum;
  MatrixXd shift;
  MatrixXd shifted_sum;
  std::vector<MatrixXd> outer;
  bool empty = true;

  Accumulator(Index dofs, Index steps)
      : sum(MatrixXd::Zero(dofs, steps)),
        shifted_sum(MatrixXd::Zero(dofs, steps)),
        outer(static_cast<std::size_t>(steps), MatrixXd::Zero(dofs, dofs)) {}

  void add(const MatrixXd& x) {
    if (empty) {
      shift = x;
      empty = false;
    }
    sum += x;
    const MatrixXd d = x - shift;
    shifted_sum += d;
    for (Index k = 0; k < x.cols(); ++k) {
      outer[static_cast<std::size_t>(k)].noalias() += d.col(k) * d.col(k).transpose();
    }
  }

  QuantityMoments finish(double count, double noise) const {
    QuantityMoments m;
    m.mean = sum / count;
    const MatrixXd offset = shifted_sum / count;
    m.covariance.resize(outer.size());
    for (std::size_t k = 0; k < outer.size(); ++k) {
      const auto c0 = offset.col(static_cast<Index>(k));
      MatrixXd c = outer[k] / count - c0 * c0.transpose();
      c = 0.5 * (c + c.transpose());
      c.diagonal().array() += noise;
      m.covariance[k] = std::move(c);
    }
    return m;
  }
};

}  // namespace

ParameterDraws sample_parameters(const HyperParameters& hyper, Index count,
                                 std::uint64_t seed, const ModelSpec& spec) {
  return draw(hyper, count, seed, &spec);
}

ParameterDraws sample_parameters(const HyperParameters& hyper, Index count,
                                 std::uint64_t seed) {
  return draw(hyper, count, seed, nullptr);
}

double noise_variance(double alpha0, double beta0) {
  require(alpha0 > 1, ErrorKind::kInvalidConfig, "alpha0 must exceed 1");
  require(beta0 >= 0, ErrorKind::kInvalidConfig, "beta0 must be non-negative");
  return (2.0 * alpha0 / (2.0 * alpha0 - 2.0)) * (beta0 / alpha0);
}

MatrixXd QuantityMoments::variance() const {
  MatrixXd v(mean.rows(), mean.cols());
  for (Index k = 0; k < mean.cols(); ++k) {
    v.col(k) = covariance[static_cast<std::size_t>(k)].diagonal();
  }
  return v;
}

const QuantityMoments& PredictiveSummary::of(Quantity q) const {
  switch (q) {
    case Quantity::kDisplacement: return displacement;
    case Quantity::kVelocity: return velocity;
    case Quantity::kAcceleration: return acceleration;
  }
  return displacement;
}

PredictiveSummary predictive_moments(const std::vector<VectorXd>& samples,
                                     const PredictionSetup& setup) {
  require(!samples.empty(), ErrorKind::kInvalidConfig, "no parameter samples");
  const double noise = noise_variance(setup.alpha0, setup.beta0);
  const Index dofs = dof_count(setup.spec);
  const Index steps = setup.input.cols();
  Accumulator disp(dofs, steps), vel(dofs, steps), acc(dofs, steps);

  // Simulations run in parallel per chunk; accumulation follows sample order.
  constexpr std::size_t kChunk = 64;
  std::vector<ResponseHistory> chunk;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t size = std::min(kChunk, samples.size() - start);
    chunk.assign(size, ResponseHistory{});
    parallel_for(size, setup.workers, [&](std::size_t i) {
      chunk[i] = simulate(setup.spec, samples[start + i], setup.initial,
                          setup.input, setup.dt);
    });
    for (const auto& r : chunk) {
      disp.add(r.displacement);
      vel.add(r.velocity);
      acc.add(r.acceleration);
    }
  }
  const double count = static_cast<double>(samples.size());
  PredictiveSummary out;
  out.dt = setup.dt;
  out.displacement = disp.finish(count, noise);
  out.velocity = vel.finish(count, noise);
  out.acceleration = acc.finish(count, noise);
  return out;
}

double student_t_density(double x, double mu, double s2, double nu) {
  const double z2 = (x - mu) * (x - mu) / s2;
  const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                          0.5 * std::log(nu * std::numbers::pi * s2);
  return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(z2 / nu));
}

double predictive_density(const VectorXd& w, Index step,
                          const std::vector<VectorXd>& samples,
                          const PredictionSetup& setup, Quantity quantity) {
  require(setup.alpha0 > 1, ErrorKind::kInvalidConfig, "alpha0 must exceed 1");
  require(setup.beta0 > 0, ErrorKind::kImproperDensity,
          "predictive density requires beta0 > 0");
  require(step >= 0 && step < setup.input.cols(), ErrorKind::kDimensionMismatch,
          "step outside the prediction horizon");
  const double nu = 2.0 * setup.alpha0;
  const double s2 = setup.beta0 / setup.alpha0;
  const MatrixXd input = setup.input.leftCols(step + 1);
  double total = 0.0;
  for (const auto& theta : samples) {
    const ResponseHistory r =
        simulate(setup.spec, theta, setup.initial, input, setup.dt);
    const auto x = r.of(quantity).col(step);
    require(x.size() == w.size(), ErrorKind::kDimensionMismatch,
            "density argument has wrong dimension");
    double product = 1.0;
    for (Index j = 0; j < w.size(); ++j) {
      product *= student_t_density(w(j), x(j), s2, nu);
    }
    total += product;
  }
  return total / static_cast<double>(samples.size());
}

double normal_band_multiplier(double level) {
  require(level > 0 && level < 1, ErrorKind::kInvalidConfig,
          "credible level must lie in (0, 1)");
  // Newton on the upper tail probability; the tail is convex and decreasing
  // for z >= 0, so iterates rise monotonically from zero to the root.
  const double tail = 0.5 * (1.0 - level);
  double z = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double f = 0.5 * std::erfc(z / std::numbers::sqrt2) - tail;
    const double density =
        std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double step = f / density;
    z += step;
    if (std::abs(step) <= 1e-15 * (1.0 + z)) break;
  }
  return z;
}

CredibleBand credible_band(const QuantityMoments& moments, double level) {
  const double z = normal_band_multiplier(level);
  const MatrixXd sd = moments.variance().cwiseMax(0.0).cwiseSqrt();
  return {moments.mean - z * sd, moments.mean + z * sd};
}

}  // namespace hbuq
