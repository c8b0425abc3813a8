// Acceptance checks: one PASS/FAIL line per criterion on stdout.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hbuq/pipeline.hpp"
#include "test_support.hpp"

namespace hbuq {
namespace {

using testing::self_generated;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct Run {
  PipelineConfig config;
  RunReport report;
  double seconds = 0.0;
};

PipelineConfig sdof_config(std::uint64_t seed, double segment_seconds,
                           Index count, std::optional<double> redraw = {}) {
  Json j = Json::parse(R"({
    "model": {"type": "sdof", "nominal_frequency": 0.15915494309189535,
              "damping_ratio": 0.05},
    "data": {"generator": {}}
  })");
  j["seed"] = seed;
  j["segmentation"] = {{"segment_seconds", segment_seconds}, {"count", count}};
  if (redraw) j["data"]["generator"]["frequency_law"] = {{"redraw_block", *redraw}};
  return config_from_json(j);
}

PipelineConfig mdof_config() {
  return config_from_json(Json::parse(R"({
    "model": {"type": "shear_building", "masses": [5.63, 6.03, 4.66],
              "nominal_stiffness": [20880, 22370, 24210],
              "modal": {"frequencies": [4.23, 12.78, 18.65],
                        "damping_ratios": [0.0239, 0.0087, 0.0065]}},
    "data": {"generator": {
      "duration": 980, "dt": 0.005, "noise_rms_ratio": 0.01,
      "frequency_law": {"redraw_block": 10},
      "parameter_law": {"mean": [1, 1, 1, 1, 1, 1],
                        "covariance": [[0.0004, 0, 0, 0, 0, 0],
                                       [0, 0.0009, 0, 0, 0, 0],
                                       [0, 0, 0.0016, 0, 0, 0],
                                       [0, 0, 0, 0.0025, 0, 0],
                                       [0, 0, 0, 0, 0.0016, 0],
                                       [0, 0, 0, 0, 0, 0.0009]]},
      "sensors": [2], "quantity": "acc"}},
    "segmentation": {"segment_seconds": 10, "count": 98},
    "seed": 7
  })"));
}

Run run(PipelineConfig config, int workers = 1) {
  config.workers = workers;
  const auto t0 = std::chrono::steady_clock::now();
  Run r{config, calibrate(config, acquire_record(config)), 0.0};
  r.seconds = seconds_since(t0);
  return r;
}

// Runs shared between criteria.
std::map<std::string, Run> cache;

const Run& cached(const std::string& key, const std::function<Run()>& make) {
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, make()).first;
  return it->second;
}

const Run& sdof_run(std::uint64_t seed) {
  return cached("sdof" + std::to_string(seed),
                [&] { return run(sdof_config(seed, 40, 40)); });
}

const Run& mdof_run() {
  return cached("mdof", [] { return run(mdof_config()); });
}

const Run& reference_run() {
  return cached("reference", [] { return run(sdof_config(1, 50, 40)); });
}

const HyperParameters& hyper_of(const Run& r) {
  if (!r.report.hyper) throw std::runtime_error("no hyper result: " + r.report.hyper_error);
  return r.report.hyper->map;
}

Outcome sdof_end_to_end() {
  Outcome o{true, {}};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Run& r = sdof_run(seed);
    const HyperParameters& h = hyper_of(r);
    const double mu = h.mean(0), sd = std::sqrt(h.covariance(0, 0));
    const bool ok = r.report.success() && mu >= 0.157 && mu <= 0.162 &&
                    sd >= 0.0010 && sd <= 0.0025 && r.seconds < 300;
    o.pass = o.pass && ok;
    o.detail += format("seed %d: mu=%.5f sd=%.5f (%.0f s); ",
                       static_cast<int>(seed), mu, sd, r.seconds);
  }
  return o;
}

Outcome table_sweep() {
  Outcome o{true, {}};
  double total = 0.0;
  for (double length : {5.0, 10.0, 20.0, 40.0}) {
    for (Index count : {20, 40, 50}) {
      // Parameters redrawn once per segment, so every cell sees as many
      // frequency draws as segments.
      const Run r = run(sdof_config(1, length, count, length));
      const HyperParameters& h = hyper_of(r);
      const double mu = h.mean(0), sd = std::sqrt(h.covariance(0, 0));
      const bool ok = mu >= 0.157 && mu <= 0.162 && sd >= 0.0006 && sd <= 0.0025;
      o.pass = o.pass && ok;
      total += r.seconds;
      o.detail += format("%gs/%d: %.4f,%.4f%s; ", length, static_cast<int>(count),
                         mu, sd, ok ? "" : " OUT");
    }
  }
  o.pass = o.pass && total < 1800;
  o.detail += format("total %.0f s", total);
  return o;
}

Outcome initializer_agreement() {
  const Run& r = reference_run();
  const HyperResult& h = *r.report.hyper;
  const double dmu = std::abs(h.initial.mean(0) - h.map.mean(0));
  const double dsd = std::abs(std::sqrt(h.initial.covariance(0, 0)) -
                              std::sqrt(h.map.covariance(0, 0)));
  return {dmu < 5e-4 && dsd < 3e-4,
          format("mu: init %.5f map %.5f; sd: init %.5f map %.5f",
                 h.initial.mean(0), h.map.mean(0),
                 std::sqrt(h.initial.covariance(0, 0)),
                 std::sqrt(h.map.covariance(0, 0)))};
}

// Fourth-order central differences, component-wise relative error. Initial
// conditions are stepped relative to their sampling scale: a step relative to a
// near-zero draw drowns in objective roundoff.
double segment_gradient_error(const TimeHistoryRecord& r, const ModelSpec& spec,
                              const VectorXd& theta, const VectorXd& psi,
                              const VectorXd& psi_scale) {
  const VectorXd g = segment_gradient(r, spec, theta, psi);
  const Index nt = theta.size();
  double worst = 0.0;
  for (Index p = 0; p < g.size(); ++p) {
    const double x = p < nt ? theta(p) : psi(p - nt);
    const double h = p < nt ? 1e-4 * std::max(std::abs(x), 1e-3)
                            : 1e-2 * std::max(std::abs(x), psi_scale(p - nt));
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

double hyper_gradient_error(const VectorXd& mu, const MatrixXd& cov,
                            const std::vector<GaussianSummary>& s) {
  const Index n = mu.size();
  const HyperGradient g = hyper_gradient(mu, cov, s);
  double worst = 0.0;
  auto check = [&](double analytic, double numeric) {
    worst = std::max(worst, std::abs(analytic - numeric) / std::abs(numeric));
  };
  for (Index i = 0; i < n; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(mu(i)));
    VectorXd p = mu, m = mu;
    p(i) += h;
    m(i) -= h;
    check(g.mean(i), (hyper_neg_log_posterior(p, cov, s) -
                      hyper_neg_log_posterior(m, cov, s)) / (2 * h));
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const double h = 1e-5 * cov.diagonal().minCoeff();
      MatrixXd p = cov, m = cov;
      p(i, j) += h;
      m(i, j) -= h;
      if (i != j) {
        p(j, i) += h;
        m(j, i) -= h;
      }
      check((i == j ? 1.0 : 2.0) * g.covariance(i, j),
            (hyper_neg_log_posterior(mu, p, s) -
             hyper_neg_log_posterior(mu, m, s)) / (2 * h));
    }
  }
  return worst;
}

Outcome gradient_suites() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  std::normal_distribution<double> g;

  double segment_worst = 0.0;
  const ModelSpec s1 = testing::sdof(0.5);
  VectorXd psi1(2);
  psi1 << 0.01, -0.02;
  const auto r1 = self_generated(s1, VectorXd::Constant(1, 0.5), psi1, 800, 0.02,
                                 {0}, Quantity::kDisplacement, 0.05, 6);
  const ModelSpec s3 = testing::three_story();
  const auto r3 = self_generated(s3, VectorXd::Ones(6), VectorXd::Zero(6), 400,
                                 0.005, {2}, Quantity::kAcceleration, 0.05, 7);
  for (int i = 0; i < 50; ++i) {
    segment_worst = std::max(
        segment_worst, segment_gradient_error(r1, s1, VectorXd::Constant(1, 0.5 * u(rng)),
                                              psi1 * u(rng), psi1.cwiseAbs()));
    VectorXd theta(6), psi(6), scale(6);
    for (Index k = 0; k < 6; ++k) {
      theta(k) = u(rng);
      scale(k) = k < 3 ? 1e-4 : 1e-3;
      psi(k) = scale(k) * g(rng);
    }
    segment_worst =
        std::max(segment_worst, segment_gradient_error(r3, s3, theta, psi, scale));
  }

  double hyper_worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index n = 1 + i % 3;
    std::vector<GaussianSummary> s;
    auto spd = [&](double scale) {
      MatrixXd a(n, n);
      for (Index k = 0; k < a.size(); ++k) a.data()[k] = g(rng);
      return MatrixXd(scale * (a * a.transpose() / static_cast<double>(n) +
                               0.2 * MatrixXd::Identity(n, n)));
    };
    auto vec = [&] {
      VectorXd v(n);
      for (Index k = 0; k < n; ++k) v(k) = g(rng);
      return v;
    };
    for (int k = 0; k < 2 + i % 5; ++k) s.push_back({vec(), spd(0.3)});
    hyper_worst = std::max(hyper_worst, hyper_gradient_error(vec(), spd(0.5), s));
  }
  return {segment_worst < 1e-6 && hyper_worst < 1e-6,
          format("segment worst %.2e, hyper worst %.2e", segment_worst, hyper_worst)};
}

Outcome laplace_oracle() {
  const ModelSpec spec = testing::sdof(0.5);
  VectorXd psi(2);
  psi << 0.01, -0.02;
  const auto r = self_generated(spec, VectorXd::Constant(1, 0.5), psi, 1000, 0.02,
                                {0}, Quantity::kDisplacement, 0.05, 21);
  MapOptions options;
  options.estimate_psi = false;
  const SegmentPosterior p =
      infer_segment(r, spec, VectorXd::Constant(1, 0.5), psi, options);
  const double mean = p.theta(0), sd = std::sqrt(p.theta_covariance(0, 0));

  const int n = 4001;
  const double lo = mean - 10 * sd, h = 20 * sd / (n - 1);
  std::vector<double> logp(n);
  double peak = -1e300;
  for (int i = 0; i < n; ++i) {
    logp[i] = -segment_neg_log_likelihood(r, spec, VectorXd::Constant(1, lo + i * h), psi);
    peak = std::max(peak, logp[i]);
  }
  double z = 0, m1 = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(logp[i] - peak);
    const double x = lo + i * h;
    z += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  const double grid_mean = m1 / z;
  const double grid_sd = std::sqrt(m2 / z - grid_mean * grid_mean);
  const double dm = std::abs(mean - grid_mean) / grid_sd;
  const double ds = std::abs(sd - grid_sd) / grid_sd;
  return {dm < 0.02 && ds < 0.02,
          format("mean diff %.4f sd, std diff %.4f sd (grid sd %.3e)", dm, ds, grid_sd)};
}

Outcome schur_identity() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index nt = 1 + t % 6, np = 2 + t % 5;
    MatrixXd a(nt + np, nt + np);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const MatrixXd h = a * a.transpose() + 0.1 * MatrixXd::Identity(nt + np, nt + np);
    const MatrixXd cov = marginal_theta_covariance(HessianBlocks::from_full(h, nt));
    const MatrixXd ref = h.inverse().topLeftCorner(nt, nt);
    worst = std::max(worst, (cov - ref).norm() / ref.norm());
  }
  return {worst < 1e-10, format("worst relative error %.2e", worst)};
}

Outcome simulation_exactness() {
  double worst = 0.0;
  for (auto [f, z, dt] : {std::tuple{1.0, 0.005, 0.01}, std::tuple{0.8, 0.05, 0.001}}) {
    const double w = 2 * std::numbers::pi * f;
    const Index steps = 10000;
    InitialConditions ic{VectorXd::Constant(1, 0.02), VectorXd::Constant(1, -0.1)};
    const auto r = simulate(testing::sdof(f, z), VectorXd::Constant(1, f), ic,
                            MatrixXd::Zero(1, steps), dt);
    VectorXd x(steps);
    for (Index k = 0; k < steps; ++k) {
      x(k) = testing::free_vibration(k * dt, w, z, 0.02, -0.1);
    }
    worst = std::max(worst, (r.displacement.row(0).transpose() - x).cwiseAbs().maxCoeff() /
                                x.cwiseAbs().maxCoeff());
  }
  return {worst < 1e-10, format("worst relative error %.2e over 1e4 steps", worst)};
}

Outcome hyper_self_consistency() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  VectorXd mu(3);
  mu << 1.0, 0.8, 1.2;
  MatrixXd cov(3, 3);
  cov << 0.0025, 0.0010, -0.0005,
         0.0010, 0.0036, 0.0008,
        -0.0005, 0.0008, 0.0016;
  std::vector<GaussianSummary> s;
  for (int i = 0; i < 500; ++i) {
    MatrixXd a(3, 3);
    for (Index k = 0; k < 9; ++k) a.data()[k] = g(rng);
    const MatrixXd c = 0.001 * (a * a.transpose() / 3.0 + 0.2 * MatrixXd::Identity(3, 3));
    const MatrixXd l = (cov + c).llt().matrixL();
    VectorXd e(3);
    for (Index k = 0; k < 3; ++k) e(k) = g(rng);
    s.push_back({mu + l * e, c});
  }
  const HyperResult r = optimize_hyper(s);
  MatrixXd info = MatrixXd::Zero(3, 3);
  for (const auto& x : s) info += (cov + x.covariance).inverse();
  const VectorXd se = info.inverse().diagonal().cwiseSqrt();
  const double worst_z = ((r.map.mean - mu).cwiseAbs().array() / se.array()).maxCoeff();
  const double frob = (r.map.covariance - cov).norm() / cov.norm();
  return {r.converged && worst_z < 3.0 && frob < 0.2,
          format("worst |mu error|/se %.2f, covariance Frobenius error %.3f",
                 worst_z, frob)};
}

Outcome mdof_twin() {
  const Run& r = mdof_run();
  const HyperParameters& h = hyper_of(r);
  const ParameterLaw& law = *r.config.generator->parameter_law;
  double mean_err = 0.0, var_err = 0.0;
  for (Index i = 0; i < 6; ++i) {
    mean_err = std::max(mean_err, std::abs(h.mean(i) / law.mean(i) - 1.0));
    var_err = std::max(var_err,
                       std::abs(h.covariance(i, i) / law.covariance(i, i) - 1.0));
  }
  return {r.report.success() && mean_err < 0.02 && var_err < 0.5 && r.seconds < 1200,
          format("%d/%d segments, worst mean error %.2f%%, worst variance error %.0f%% (%.0f s)",
                 static_cast<int>(r.report.converged_segments()),
                 static_cast<int>(r.report.segments.size()), 100 * mean_err,
                 100 * var_err, r.seconds)};
}

Outcome prediction_moments() {
  // Moments against brute-force sampling with per-step t noise.
  PredictionSetup s;
  s.spec = testing::sdof();
  s.initial = {VectorXd::Constant(1, 0.01), VectorXd::Constant(1, -0.02)};
  s.dt = 0.01;
  s.input = generate_gwn(0.01, s.dt, 100, 9).transpose();
  s.alpha0 = 3.0;
  s.beta0 = 2e-5;
  const HyperParameters h{VectorXd::Constant(1, 1.0), MatrixXd::Constant(1, 1, 0.0064)};
  const Index ns = 20000;
  const auto p = predictive_moments(sample_parameters(h, ns, 31, s.spec).samples, s);
  std::mt19937_64 rng(32);
  std::student_t_distribution<double> t(2 * s.alpha0);
  const double scale = std::sqrt(s.beta0 / s.alpha0);
  std::vector<Eigen::ArrayXd> w;
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(100);
  for (const auto& x : sample_parameters(h, ns, 33, s.spec).samples) {
    Eigen::ArrayXd y =
        simulate(s.spec, x, s.initial, s.input, s.dt).displacement.row(0).transpose();
    for (Index k = 0; k < 100; ++k) y(k) += scale * t(rng);
    mean += y / static_cast<double>(ns);
    w.push_back(std::move(y));
  }
  Eigen::ArrayXd var = Eigen::ArrayXd::Zero(100), m4 = var;
  for (const auto& y : w) {
    var += (y - mean).square() / static_cast<double>(ns - 1);
    m4 += (y - mean).square().square() / static_cast<double>(ns);
  }
  const MatrixXd pv = p.displacement.variance();
  double worst = 0.0;
  for (Index k = 0; k < 100; ++k) {
    const double se_mean = std::sqrt(2.0 * var(k) / ns);
    const double se_var = std::sqrt(2.0 * (m4(k) - var(k) * var(k)) / ns);
    worst = std::max({worst, std::abs(p.displacement.mean(0, k) - mean(k)) / se_mean,
                      std::abs(pv(0, k) - var(k)) / se_var});
  }

  // Band coverage of the generator truth for a new event.
  const Run& r = reference_run();
  const PredictionRun pr = predict(r.config, hyper_of(r));
  const double cover = *std::min_element(pr.coverage.begin(), pr.coverage.end());
  return {worst < 3.0 && cover >= 0.95,
          format("worst moment deviation %.2f se; 99%% band coverage disp %.4f vel %.4f "
                 "acc %.4f",
                 worst, pr.coverage[0], pr.coverage[1], pr.coverage[2])};
}

Outcome determinism() {
  const Run& a = sdof_run(1);
  const Run b = run(a.config, 8);
  const Run& c = mdof_run();
  const Run d = run(c.config, 8);
  const bool sdof_same = report_to_json(a.report).dump() == report_to_json(b.report).dump();
  const bool mdof_same = report_to_json(c.report).dump() == report_to_json(d.report).dump();
  return {sdof_same && mdof_same,
          format("sdof reports %s, mdof reports %s", sdof_same ? "identical" : "differ",
                 mdof_same ? "identical" : "differ")};
}

}  // namespace
}  // namespace hbuq

int main() {
  using namespace hbuq;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sdof end-to-end", sdof_end_to_end},
      {"segmentation sweep", table_sweep},
      {"initializer agreement", initializer_agreement},
      {"gradient suites", gradient_suites},
      {"laplace oracle", laplace_oracle},
      {"schur identity", schur_identity},
      {"simulation exactness", simulation_exactness},
      {"hyper self-consistency", hyper_self_consistency},
      {"mdof synthetic twin", mdof_twin},
      {"prediction moments", prediction_moments},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
