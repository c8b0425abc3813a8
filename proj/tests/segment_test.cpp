#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hbuq/generator.hpp"
#include "hbuq/segment.hpp"
#include "test_support.hpp"

namespace hbuq {
namespace {

using testing::sdof;
using testing::three_story;
using testing::self_generated;

VectorXd sdof_psi() {
  VectorXd psi(2);
  psi << 0.01, -0.02;
  return psi;
}

GTEST_TEST(PredictionErrors, SelfGeneratedIsZero) {
  const ModelSpec spec = sdof(0.5);
  const VectorXd theta = VectorXd::Constant(1, 0.5);
  const auto r = self_generated(spec, theta, sdof_psi(), 300, 0.01, {0},
                                Quantity::kDisplacement, 0.0, 1);
  EXPECT_EQ(prediction_errors(r, spec, theta, sdof_psi()).cwiseAbs().maxCoeff(), 0.0);
}

GTEST_TEST(PredictionErrors, ConstantOffset) {
  const ModelSpec spec = three_story();
  const VectorXd theta = VectorXd::Ones(6);
  const VectorXd psi = VectorXd::Zero(6);
  auto r = self_generated(spec, theta, psi, 200, 0.005, {0, 2},
                          Quantity::kAcceleration, 0.0, 2);
  r.output.row(1).array() += 0.25;
  const MatrixXd e = prediction_errors(r, spec, theta, psi);
  EXPECT_LT(e.row(0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((e.row(1).array() - 0.25).abs().maxCoeff(), 1e-12);
}

GTEST_TEST(PredictionErrors, DirectSubtraction) {
  const ModelSpec spec = three_story();
  VectorXd theta(6), psi(6);
  theta << 1.1, 0.9, 1.0, 1.2, 0.8, 1.05;
  psi << 1e-4, -2e-4, 3e-4, 1e-3, 0, -1e-3;
  const auto r = self_generated(spec, VectorXd::Ones(6), VectorXd::Zero(6), 150, 0.005,
                                {1, 2}, Quantity::kVelocity, 0.05, 3);
  const auto sim = simulate(spec, theta, InitialConditions::from_stacked(psi), r.input, 0.005);
  MatrixXd expected(2, 150);
  expected.row(0) = r.output.row(0) - sim.velocity.row(1);
  expected.row(1) = r.output.row(1) - sim.velocity.row(2);
  EXPECT_LT(testing::rel_error(prediction_errors(r, spec, theta, psi), expected), 1e-14);
}

GTEST_TEST(JeffreysObjective, HandValue) {
  MatrixXd e(1, 3);
  e << 1, 2, 2;
  EXPECT_NEAR(jeffreys_neg_log_likelihood(e), 1.5 * std::log(9.0), 1e-15);
}

GTEST_TEST(JeffreysObjective, ScalingAndPermutation) {
  const MatrixXd e = MatrixXd::Random(3, 40);
  const double c = 2.7;
  EXPECT_NEAR(jeffreys_neg_log_likelihood(c * e) - jeffreys_neg_log_likelihood(e),
              40 * 3 * std::log(c), 1e-10);
  MatrixXd p(3, 40);
  p << e.row(2), e.row(0), e.row(1);
  EXPECT_NEAR(jeffreys_neg_log_likelihood(p), jeffreys_neg_log_likelihood(e), 1e-12);
}

GTEST_TEST(JeffreysObjective, FloorRaisesDegenerateFit) {
  const MatrixXd e = MatrixXd::Constant(1, 10, 1e-20);
  try {
    jeffreys_neg_log_likelihood(e, VectorXd::Constant(1, 1e-30));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kDegenerateFit);
  }
  const ModelSpec spec = sdof(0.5);
  const VectorXd theta = VectorXd::Constant(1, 0.5);
  const auto r = self_generated(spec, theta, sdof_psi(), 300, 0.01, {0},
                                Quantity::kDisplacement, 0.0, 1);
  try {
    segment_neg_log_likelihood(r, spec, theta, sdof_psi());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kDegenerateFit);
  }
}

GTEST_TEST(SegmentObjective, ChannelPermutation) {
  const ModelSpec spec = three_story();
  const VectorXd theta = VectorXd::Ones(6);
  const VectorXd psi = VectorXd::Zero(6);
  auto r = self_generated(spec, theta, psi, 200, 0.005, {0, 2}, Quantity::kAcceleration,
                          0.05, 4);
  TimeHistoryRecord p = r;
  p.output.row(0) = r.output.row(1);
  p.output.row(1) = r.output.row(0);
  p.sensors = {2, 0};
  VectorXd t2 = theta;
  t2(0) = 1.1;
  EXPECT_NEAR(segment_neg_log_likelihood(r, spec, t2, psi),
              segment_neg_log_likelihood(p, spec, t2, psi), 1e-9);
}

// Fourth-order central differences; component-wise relative error.
double max_rel_gradient_error(const TimeHistoryRecord& r, const ModelSpec& spec,
                              const VectorXd& theta, const VectorXd& psi) {
  const VectorXd g = segment_gradient(r, spec, theta, psi);
  const Index nt = theta.size();
  double worst = 0.0;
  for (Index p = 0; p < g.size(); ++p) {
    const double x = p < nt ? theta(p) : psi(p - nt);
    const double h = 1e-4 * std::max(std::abs(x), p < nt ? 1e-3 : 1e-6);
    auto at = [&](double d) {
      VectorXd t = theta, q = psi;
      (p < nt ? t(p) : q(p - nt)) += d;
      return segment_neg_log_likelihood(r, spec, t, q);
    };
    const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
    worst = std::max(worst, std::abs(g(p) - fd) / std::abs(fd));
  }
  return worst;
}

GTEST_TEST(SegmentGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  const ModelSpec s1 = sdof(0.5);
  const auto r1 = self_generated(s1, VectorXd::Constant(1, 0.5), sdof_psi(), 800, 0.02,
                                 {0}, Quantity::kDisplacement, 0.05, 6);
  for (int i = 0; i < 5; ++i) {
    const VectorXd theta = VectorXd::Constant(1, 0.5 * u(rng));
    VectorXd psi = sdof_psi();
    psi *= u(rng);
    EXPECT_LT(max_rel_gradient_error(r1, s1, theta, psi), 1e-6);
  }
  const ModelSpec s3 = three_story();
  const auto r3 = self_generated(s3, VectorXd::Ones(6), VectorXd::Zero(6), 400, 0.005,
                                 {2}, Quantity::kAcceleration, 0.05, 7);
  for (int i = 0; i < 3; ++i) {
    VectorXd theta(6), psi(6);
    for (Index k = 0; k < 6; ++k) {
      theta(k) = u(rng);
      psi(k) = (k < 3 ? 1e-4 : 1e-3) * (u(rng) - 1.0) * 10;
    }
    EXPECT_LT(max_rel_gradient_error(r3, s3, theta, psi), 1e-6);
  }
}

GTEST_TEST(SegmentGradient, FrozenModelHasNoParameterGradient) {
  // Zero input and zero initial state: the model output is identically zero
  // whatever theta is, so only the initial-condition directions can matter.
  const ModelSpec spec = sdof(0.5);
  TimeHistoryRecord r;
  r.dt = 0.01;
  r.input = MatrixXd::Zero(1, 100);
  r.output = MatrixXd::Constant(1, 100, 0.3);
  r.output(0, 7) = 0.31;  // keep the variance floor above zero
  r.sensors = {0};
  const VectorXd g =
      segment_gradient(r, spec, VectorXd::Constant(1, 0.5), VectorXd::Zero(2));
  EXPECT_EQ(g(0), 0.0);
}

GTEST_TEST(MapSegment, RecoversGeneratingPoint) {
  const ModelSpec spec = sdof(0.5);
  const VectorXd theta = VectorXd::Constant(1, 0.5);
  const auto r = self_generated(spec, theta, sdof_psi(), 2000, 0.01, {0},
                                Quantity::kDisplacement, 1e-6, 8);
  const MapEstimate m = map_segment(r, spec, VectorXd::Constant(1, 0.47), VectorXd::Zero(2));
  ASSERT_TRUE(m.converged);
  EXPECT_NEAR(m.theta(0), 0.5, 1e-6 * 0.5);
  EXPECT_LT((m.psi - sdof_psi()).cwiseAbs().maxCoeff(), 1e-6 * sdof_psi().cwiseAbs().maxCoeff());
}

GTEST_TEST(MapSegment, RecoversShearBuilding) {
  const ModelSpec spec = three_story();
  VectorXd theta(6), psi(6);
  theta << 1.03, 0.97, 1.01, 1.1, 0.95, 1.0;
  psi << 2e-4, 1e-4, -1e-4, 5e-3, -2e-3, 1e-3;
  const auto r = self_generated(spec, theta, psi, 2000, 0.005, {2},
                                Quantity::kAcceleration, 1e-6, 9);
  const MapEstimate m = map_segment(r, spec, VectorXd::Ones(6), VectorXd::Zero(6));
  ASSERT_TRUE(m.converged);
  EXPECT_LT(((m.theta - theta).array() / theta.array()).abs().maxCoeff(), 1e-6);
}

GTEST_TEST(MapSegment, SyntheticSegmentFrequency) {
  GeneratorConfig c;
  c.duration = 200;
  c.seed = 3;
  const SyntheticDataset d = synthesize_sdof_dataset(c);
  const SegmentSet set = split_segments(d.record, 10000, 4);
  const ModelSpec spec = sdof(c.frequency_law.mean);
  for (Index i = 0; i < 4; ++i) {
    const MapEstimate m = map_segment(set.segments[i], spec,
                                      VectorXd::Constant(1, c.frequency_law.mean),
                                      VectorXd::Zero(2));
    ASSERT_TRUE(m.converged);
    EXPECT_NEAR(m.theta(0), d.block_parameters(0, i), 0.01);
  }
}

GTEST_TEST(MapSegment, InfeasibleStart) {
  const ModelSpec spec = three_story();
  const auto r = self_generated(spec, VectorXd::Ones(6), VectorXd::Zero(6), 200, 0.005,
                                {2}, Quantity::kAcceleration, 0.01, 10);
  VectorXd theta0 = VectorXd::Ones(6);
  theta0(0) = -0.5;
  try {
    map_segment(r, spec, theta0, VectorXd::Zero(6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasibleStart);
  }
}

GTEST_TEST(Hessian, MethodsAgreeAtMap) {
  const ModelSpec spec = sdof(0.5);
  const auto r = self_generated(spec, VectorXd::Constant(1, 0.5), sdof_psi(), 3000,
                                0.01, {0}, Quantity::kDisplacement, 0.01, 11);
  const MapEstimate m = map_segment(r, spec, VectorXd::Constant(1, 0.5), VectorXd::Zero(2));
  ASSERT_TRUE(m.converged);
  const MatrixXd gn = hessian_segment(r, spec, m.theta, m.psi).full();
  const MatrixXd fd =
      hessian_segment(r, spec, m.theta, m.psi, HessianMethod::kFiniteDifference).full();
  EXPECT_LT((gn - fd).norm() / fd.norm(), 0.02);
  EXPECT_TRUE(gn.isApprox(gn.transpose(), 0.0));
}

GTEST_TEST(Hessian, ExactForLinearParameters) {
  // The output is linear in the initial conditions, so with theta fixed the
  // Gauss-Newton curvature in psi is the exact Hessian even away from the MAP.
  const ModelSpec spec = sdof(0.5);
  const auto r = self_generated(spec, VectorXd::Constant(1, 0.5), sdof_psi(), 500,
                                0.01, {0}, Quantity::kDisplacement, 0.05, 12);
  const VectorXd theta = VectorXd::Constant(1, 0.5);
  VectorXd psi(2);
  psi << 0.0105, -0.019;
  const auto gn = hessian_segment(r, spec, theta, psi);
  const auto fd = hessian_segment(r, spec, theta, psi, HessianMethod::kFiniteDifference);
  EXPECT_LT((gn.psi_psi - fd.psi_psi).norm() / fd.psi_psi.norm(), 1e-6);
}

GTEST_TEST(Hessian, JointScaleInvariance) {
  const ModelSpec spec = sdof(0.5);
  auto r = self_generated(spec, VectorXd::Constant(1, 0.5), sdof_psi(), 500, 0.01, {0},
                          Quantity::kDisplacement, 0.05, 13);
  const VectorXd theta = VectorXd::Constant(1, 0.5);
  const auto h1 = hessian_segment(r, spec, theta, sdof_psi());
  const double c = 8.0;
  r.output *= c;
  r.input *= c;
  const auto h2 = hessian_segment(r, spec, theta, c * sdof_psi());
  EXPECT_LT(std::abs(h2.theta_theta(0, 0) - h1.theta_theta(0, 0)) / h1.theta_theta(0, 0), 1e-10);
}

GTEST_TEST(MarginalCovariance, DecoupledBlocks) {
  HessianBlocks h;
  h.theta_theta = MatrixXd{{4.0, 1.0}, {1.0, 3.0}};
  h.theta_psi = MatrixXd::Zero(2, 3);
  h.psi_psi = MatrixXd::Identity(3, 3) * 2.0;
  EXPECT_TRUE(marginal_theta_covariance(h).isApprox(h.theta_theta.inverse(), 1e-14));
}

GTEST_TEST(MarginalCovariance, ScalarBlocksByHand) {
  HessianBlocks h;
  h.theta_theta = MatrixXd::Constant(1, 1, 4.0);
  h.theta_psi = MatrixXd::Constant(1, 1, 2.0);
  h.psi_psi = MatrixXd::Constant(1, 1, 3.0);
  // (4 - 2 * 2 / 3)^-1 = 3 / 8.
  EXPECT_NEAR(marginal_theta_covariance(h)(0, 0), 0.375, 1e-15);
}

GTEST_TEST(MarginalCovariance, FullInverseBlock) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    MatrixXd a(7, 7);
    for (Index i = 0; i < 49; ++i) a.data()[i] = g(rng);
    const MatrixXd h = a * a.transpose() + 0.5 * MatrixXd::Identity(7, 7);
    const MatrixXd cov = marginal_theta_covariance(HessianBlocks::from_full(h, 3));
    const MatrixXd ref = h.inverse().topLeftCorner(3, 3);
    EXPECT_LT((cov - ref).norm() / ref.norm(), 1e-10);
  }
}

GTEST_TEST(MarginalCovariance, SingularBlock) {
  HessianBlocks h;
  h.theta_theta = MatrixXd::Identity(1, 1);
  h.theta_psi = MatrixXd::Zero(1, 2);
  h.psi_psi = MatrixXd{{1.0, 0.0}, {0.0, 1e-14}};
  try {
    marginal_theta_covariance(h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingularBlock);
  }
}

GTEST_TEST(InferSegment, PosteriorIsConsistent) {
  const ModelSpec spec = sdof(0.5);
  const auto r = self_generated(spec, VectorXd::Constant(1, 0.5), sdof_psi(), 2000,
                                0.01, {0}, Quantity::kDisplacement, 0.01, 15);
  const SegmentPosterior p =
      infer_segment(r, spec, VectorXd::Constant(1, 0.5), VectorXd::Zero(2));
  ASSERT_TRUE(p.converged);
  const VectorXd g = segment_gradient(r, spec, p.theta, p.psi);
  EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-8 * (1 + std::abs(p.objective)));
  EXPECT_GT(p.theta_covariance(0, 0), 0.0);
  EXPECT_TRUE(p.hessian.theta_theta.isApprox(p.hessian.theta_theta.transpose()));
  EXPECT_EQ(Eigen::LLT<MatrixXd>(p.hessian.full()).info(), Eigen::Success);
  EXPECT_NEAR(p.theta(0), 0.5, 5 * std::sqrt(p.theta_covariance(0, 0)));
}

}  // namespace
}  // namespace hbuq
