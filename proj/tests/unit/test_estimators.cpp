#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "fieldest/channel.hpp"
#include "fieldest/estimators.hpp"
#include "fieldest/network.hpp"
#include "oracles.hpp"

using namespace fieldest;

namespace {

const FieldParams kRef = FieldParams::reference();
const ParamVector kTruth = kRef.to_vector();
const Area kArea = Area::square(8);
const GaussianBell kBell;

ParamVector vec(double h, double rx, double ry, double xc, double yc) {
  ParamVector v;
  v << h, rx, ry, xc, yc;
  return v;
}

const ParamVector kInit = vec(9, 1.5, 1.5, 3, 3);

struct Scenario {
  SensorNetwork net;
  Quantizer q;
  BitMapper bm;
  ReceivedMatrix z;
};

// m == 0 selects the analog channel.
Scenario scenario(int k, int m, double snr_o, double snr_c, std::uint64_t seed) {
  SensorNetwork net = deploy_uniform(static_cast<std::size_t>(k), kArea, seed);
  const double s2 = calibrate_sigma(kBell, kRef, kArea, snr_o);
  net.set_noise_variance(s2);
  const int levels = m == 0 ? 2 : m;
  Quantizer q = make_uniform_quantizer(levels, 0, 12);
  BitMapper bm(levels);
  const ObservationVector r = sample_observations(net, kBell, kRef, seed + 1000);
  ReceivedMatrix z = m == 0 ? amplify_forward(r, calibrate_eta_analog(kBell, kRef, kArea, s2, snr_c), seed + 2000)
                            : quantize_forward(r, q, bm, calibrate_eta_quantized(kBell, kRef, kArea, q, s2, snr_c),
                                               seed + 2000);
  return {std::move(net), std::move(q), std::move(bm), std::move(z)};
}

ParamVector random_theta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> h(6, 10), rho(1.4, 2.8), c(3, 5);
  return vec(h(rng), rho(rng), rho(rng), c(rng), c(rng));
}

ParamVector componentwise_median(std::vector<ParamVector> v) {
  ParamVector out;
  for (int i = 0; i < kNumParams; ++i) {
    std::vector<double> c;
    for (const ParamVector& p : v) c.push_back(p[i]);
    std::sort(c.begin(), c.end());
    const std::size_t n = c.size();
    out[i] = n % 2 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Analog

TEST(LoglikAnalog, ExactFitIsZero) {
  Scenario s = scenario(15, 0, 15, 15, 1);
  for (std::size_t k = 0; k < s.net.size(); ++k) {
    s.z.z(static_cast<Eigen::Index>(k), 0) = field_value(kRef, s.net.positions()[k].x, s.net.positions()[k].y);
  }
  EXPECT_EQ(loglik_analog(s.z, s.net, kBell, kTruth), 0.0);
}

TEST(LoglikAnalog, QuadraticInResiduals) {
  Scenario s = scenario(15, 0, 15, 15, 2);
  ReceivedMatrix twice = s.z;
  for (std::size_t k = 0; k < s.net.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double g = field_value(kRef, s.net.positions()[k].x, s.net.positions()[k].y);
    twice.z(i, 0) = g + 2 * (s.z.z(i, 0) - g);
  }
  EXPECT_NEAR(loglik_analog(twice, s.net, kBell, kTruth), 4 * loglik_analog(s.z, s.net, kBell, kTruth), 1e-10);
}

TEST(LoglikAnalog, MatchesDirectSum) {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 20; ++n) {
    const Scenario s = scenario(25, 0, 12, 18, 100 + static_cast<std::uint64_t>(n));
    const ParamVector t = random_theta(rng);
    double oracle = 0.0;
    for (std::size_t k = 0; k < s.net.size(); ++k) {
      const Point& p = s.net.positions()[k];
      const double g = t[0] * std::exp(-std::pow(p.x - t[3], 2) / (2 * t[1] * t[1]) - std::pow(p.y - t[4], 2) / (2 * t[2] * t[2]));
      oracle -= 0.5 * std::pow(s.z.z(static_cast<Eigen::Index>(k), 0) - g, 2) / (s.net.sigma2()[k] + s.z.eta2[k]);
    }
    EXPECT_NEAR(loglik_analog(s.z, s.net, kBell, t), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(LoglikAnalog, RejectsDimensionMismatch) {
  const Scenario s = scenario(10, 0, 15, 15, 4);
  const SensorNetwork other = [] {
    SensorNetwork n = deploy_uniform(11, kArea, 5);
    n.set_noise_variance(0.3);
    return n;
  }();
  EXPECT_THROW(loglik_analog(s.z, other, kBell, kTruth), std::invalid_argument);
}

TEST(LoglikAnalogDerivatives, MatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const Scenario s = scenario(30, 0, 15, 15, 8);
  for (int n = 0; n < 20; ++n) {
    const ParamVector t = random_theta(rng);
    const LocalQuadratic lq = loglik_analog_derivatives(s.z, s.net, kBell, t);
    EXPECT_NEAR(lq.value, loglik_analog(s.z, s.net, kBell, t), 1e-12 * std::max(1.0, std::abs(lq.value)));
    for (int i = 0; i < kNumParams; ++i) {
      const double step = 1e-6;
      ParamVector hi = t, lo = t;
      hi[i] += step;
      lo[i] -= step;
      const double fd = (loglik_analog(s.z, s.net, kBell, hi) - loglik_analog(s.z, s.net, kBell, lo)) / (2 * step);
      EXPECT_LT(std::abs(fd - lq.gradient[i]), 1e-5 * std::max(1.0, std::abs(lq.gradient[i])));
      const ParamVector fd_col = (loglik_analog_derivatives(s.z, s.net, kBell, hi).gradient -
                                  loglik_analog_derivatives(s.z, s.net, kBell, lo).gradient) /
                                 (2 * step);
      EXPECT_LT((fd_col - lq.hessian.col(i)).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, lq.hessian.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(NewtonMlAnalog, ZeroNoiseFromTruth) {
  SensorNetwork net = deploy_uniform(20, kArea, 9);
  net.set_noise_variance(1e-20);
  const ReceivedMatrix z = amplify_forward(sample_observations(net, kBell, kRef, 10), 1e-20, 11);
  const EstimateResult r = newton_ml_analog(z, net, kBell, kTruth);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_LT((r.theta_hat - kTruth).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(r.trace.theta.size(), static_cast<std::size_t>(r.iterations) + 1);
}

// Single realizations scatter by the estimator's own noise, so closeness is
// asserted on the componentwise median over ten deployments.
TEST(NewtonMlAnalog, ConvergesNearTruthAtTwentyDb) {
  std::vector<ParamVector> hats;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scenario s = scenario(20, 0, 20, 20, seed * 31);
    const EstimateResult r = newton_ml_analog(s.z, s.net, kBell, kInit);
    EXPECT_TRUE(r.converged) << seed;
    hats.push_back(r.theta_hat);
  }
  EXPECT_LE((componentwise_median(hats) - kTruth).cwiseAbs().maxCoeff(), 0.2);
}

// Property: every converged run stops at a stationary point.
TEST(NewtonMlAnalogProperty, ConvergedRunsAreStationary) {
  int converged = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Scenario s = scenario(40, 0, 15, 15, seed);
    const EstimateResult r = newton_ml_analog(s.z, s.net, kBell, kInit);
    if (!r.converged) continue;
    ++converged;
    const LocalQuadratic lq = loglik_analog_derivatives(s.z, s.net, kBell, r.theta_hat);
    EXPECT_LT(lq.gradient.cwiseAbs().maxCoeff(), 1e-4 * 40) << seed;
    EXPECT_EQ(r.theta_hat, newton_ml_analog(s.z, s.net, kBell, kInit).theta_hat);
  }
  EXPECT_GT(converged, 90);
}

// ---------------------------------------------------------------------------
// Quantized likelihood

TEST(LoglikQuantized, MatchesNaiveSum) {
  std::mt19937_64 rng(12);
  for (int n = 0; n < 10; ++n) {
    const Scenario s = scenario(20, 4, 15, 5, 200 + static_cast<std::uint64_t>(n));
    const ParamVector t = random_theta(rng);
    double oracle = 0.0;
    for (std::size_t k = 0; k < s.net.size(); ++k) {
      const Point& p = s.net.positions()[k];
      const auto pk = level_probabilities(s.q, kBell.value(t, p.x, p.y), std::sqrt(s.net.sigma2()[k]));
      double sum = 0.0;
      for (int j = 0; j < 4; ++j) {
        const double d = (s.z.z.row(static_cast<Eigen::Index>(k)).transpose() - s.bm.code(j)).squaredNorm();
        sum += pk[static_cast<std::size_t>(j)] * std::exp(-d / (2 * s.z.eta2[k]));
      }
      oracle += std::log(sum);
    }
    EXPECT_NEAR(loglik_quantized(s.z, s.net, s.q, s.bm, kBell, t), oracle, 1e-10);
  }
}

TEST(LoglikQuantized, DegenerateMixtureIsGaussian) {
  SensorNetwork net({{0.0, 0.0}}, kArea);
  net.set_noise_variance(0.01);
  const Quantizer q = make_uniform_quantizer(2, 20, 40);  // G is far below the single boundary
  const BitMapper bm(2);
  ReceivedMatrix z{ChannelKind::kQuantized, Eigen::MatrixXd::Constant(1, 1, 0.3), {0.25}};
  EXPECT_NEAR(loglik_quantized(z, net, q, bm, kBell, kTruth), -0.3 * 0.3 / (2 * 0.25), 1e-14);
}

TEST(LoglikQuantized, UninformativeChannelFlattens) {
  std::mt19937_64 rng(13);
  Scenario s = scenario(20, 8, 15, 15, 14);
  double prev = std::numeric_limits<double>::infinity();
  for (double eta2 : {1.0, 1e2, 1e4, 1e6}) {
    std::fill(s.z.eta2.begin(), s.z.eta2.end(), eta2);
    double worst = 0.0;
    std::mt19937_64 pairs(15);
    for (int n = 0; n < 10; ++n) {
      worst = std::max(worst, std::abs(loglik_quantized(s.z, s.net, s.q, s.bm, kBell, random_theta(pairs)) -
                                       loglik_quantized(s.z, s.net, s.q, s.bm, kBell, random_theta(pairs))));
    }
    EXPECT_LT(worst, prev);
    prev = worst;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(LoglikQuantizedDerivatives, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(16);
  const Scenario s = scenario(30, 8, 15, 15, 17);
  for (int n = 0; n < 20; ++n) {
    const ParamVector t = random_theta(rng);
    const LocalQuadratic lq = loglik_quantized_derivatives(s.z, s.net, s.q, s.bm, kBell, t);
    EXPECT_NEAR(lq.value, loglik_quantized(s.z, s.net, s.q, s.bm, kBell, t), 1e-10 * std::max(1.0, std::abs(lq.value)));
    const double gscale = std::max(1.0, lq.gradient.cwiseAbs().maxCoeff());
    const double hscale = std::max(1.0, lq.hessian.cwiseAbs().maxCoeff());
    for (int i = 0; i < kNumParams; ++i) {
      const double step = 1e-6;
      ParamVector hi = t, lo = t;
      hi[i] += step;
      lo[i] -= step;
      const double fd = (loglik_quantized(s.z, s.net, s.q, s.bm, kBell, hi) -
                         loglik_quantized(s.z, s.net, s.q, s.bm, kBell, lo)) /
                        (2 * step);
      EXPECT_LT(std::abs(fd - lq.gradient[i]) / gscale, 1e-5) << n << " " << i;
      const ParamVector fd_col = (loglik_quantized_derivatives(s.z, s.net, s.q, s.bm, kBell, hi).gradient -
                                  loglik_quantized_derivatives(s.z, s.net, s.q, s.bm, kBell, lo).gradient) /
                                 (2 * step);
      EXPECT_LT((fd_col - lq.hessian.col(i)).cwiseAbs().maxCoeff() / hscale, 1e-4) << n << " " << i;
    }
  }
}

// ---------------------------------------------------------------------------
// EM

TEST(EmQuantities, CellMassesTelescope) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> g(-10, 20), s(0.01, 5);
  for (int m : {2, 4, 8, 16}) {
    const Quantizer q = make_uniform_quantizer(m, 0, 12);
    for (int n = 0; n < 100; ++n) {
      const double gv = g(rng), sv = s(rng);
      double sum = 0.0;
      for (int j = 0; j < m; ++j) sum += gaussian_interval_mass((q.lower(j) - gv) / sv, (q.upper(j) - gv) / sv);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(EmQuantities, MatchesConditionalMeanIntegral) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> g(-2, 14), s(0.2, 2.0), e(0.05, 1.0), noise(-1.0, 1.0);
  std::uniform_int_distribution<int> bits(1, 4);
  for (int n = 0; n < 100; ++n) {
    const int m = 1 << bits(rng);
    const Quantizer q = make_uniform_quantizer(m, 0, 12);
    const BitMapper bm(m);
    std::vector<double> zk(static_cast<std::size_t>(bm.alpha()));
    for (double& v : zk) v = (rng() & 1) + noise(rng);
    const double gv = g(rng), sv = s(rng), ev = e(rng);
    const EmQuantities got = em_quantities(zk, q, bm, gv, sv, ev);
    const EmQuantities want = oracle::em_conditional_mean(zk, q, bm, gv, sv, ev);
    EXPECT_NEAR(got.a, want.a, 1e-8) << n;
    EXPECT_NEAR(got.b, want.b, 1e-12) << n;
    EXPECT_TRUE(std::isfinite(got.a));
  }
}

TEST(EmQuantities, ExactCodeWordWithQuietChannel) {
  const Quantizer q = make_uniform_quantizer(4, 0, 8);
  const BitMapper bm(4);
  const std::vector<double> zk{0.0, 1.0};  // level 1, cell [2, 4)
  const EmQuantities got = em_quantities(zk, q, bm, 3.0, 0.5, 1e-4);
  EXPECT_GT(got.b, 0.0);
  EXPECT_GT(got.a, 2.0);
  EXPECT_LT(got.a, 4.0);
  EXPECT_NEAR(got.a, oracle::em_conditional_mean(zk, q, bm, 3.0, 0.5, 1e-4).a, 1e-8);
}

TEST(EmQuantities, RejectsBadArguments) {
  const Quantizer q = make_uniform_quantizer(4, 0, 8);
  const BitMapper bm(4);
  const std::vector<double> zk{0.0, 1.0};
  EXPECT_THROW(em_quantities(zk, q, bm, 3, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(em_quantities(zk, q, bm, 3, 1, 0.0), std::invalid_argument);
  EXPECT_THROW(em_quantities(std::vector<double>{0.0}, q, bm, 3, 1, 1), std::invalid_argument);
}

TEST(EmStep, FixedPointIsKept) {
  const Scenario s = scenario(40, 8, 15, 15, 20);
  SolverConfig tight;
  tight.tol = 1e-13;
  tight.max_outer = 5000;
  const EstimateResult r = em_estimate(s.z, s.net, s.q, s.bm, kBell, kTruth, tight);
  ASSERT_TRUE(r.converged);
  const EmStepResult step = em_step(s.z, s.net, s.q, s.bm, kBell, r.theta_hat);
  EXPECT_LT((step.theta - r.theta_hat).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EmStep, SolvesFrozenEquations) {
  std::mt19937_64 rng(21);
  const Scenario s = scenario(40, 8, 15, 15, 22);
  int solved = 0;
  for (int n = 0; n < 20; ++n) {
    const ParamVector t = random_theta(rng);
    const EmStepResult step = em_step(s.z, s.net, s.q, s.bm, kBell, t);
    if (!step.inner_converged) continue;
    ++solved;
    const auto frozen = em_expectation(s.z, s.net, s.q, s.bm, kBell, t);
    EXPECT_LT(em_residual(s.net, kBell, frozen, step.theta).cwiseAbs().maxCoeff(), 1e-6 * 40);
  }
  EXPECT_GE(solved, 18);
}

TEST(EmEstimate, SixteenLevelsConverge) {
  std::vector<ParamVector> hats;
  int converged = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Scenario s = scenario(20, 16, 15, 15, seed * 7);
    const EstimateResult r = em_estimate(s.z, s.net, s.q, s.bm, kBell, kInit);
    converged += r.converged;
    hats.push_back(r.theta_hat);
  }
  EXPECT_GE(converged, 24);
  // Twenty quantized sensors leave a spread of about one unit in h even at the
  // likelihood maximum, so the band is wider than in the analog case.
  EXPECT_LE((componentwise_median(hats) - kTruth).cwiseAbs().maxCoeff(), 1.0);
}

TEST(EmEstimate, FineQuantizerQuietChannelReturnsTruth) {
  SensorNetwork net = deploy_uniform(40, kArea, 23);
  net.set_noise_variance(1e-12);
  const Quantizer q = make_uniform_quantizer(1024, 0, 12);
  const BitMapper bm(1024);
  const ReceivedMatrix z = quantize_forward(sample_observations(net, kBell, kRef, 24), q, bm, 1e-4, 25);
  const EstimateResult r = em_estimate(z, net, q, bm, kBell, kTruth);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.theta_hat - kTruth).cwiseAbs().maxCoeff(), 1e-6);
}

// Property: EM never lowers the incomplete-data likelihood, and converged runs
// are self-consistent fixed points.
TEST(EmEstimateProperty, AscentAndFixedPoint) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Scenario s = scenario(40, 8, 15, 15, seed + 300);
    const EstimateResult r = em_estimate(s.z, s.net, s.q, s.bm, kBell, kInit);
    for (std::size_t i = 1; i < r.trace.loglik.size(); ++i) {
      EXPECT_GE(r.trace.loglik[i], r.trace.loglik[i - 1] - 1e-9) << seed << " at " << i;
    }
    EXPECT_EQ(r.trace.loglik.size(), r.trace.theta.size());
    if (r.converged) {
      const auto frozen = em_expectation(s.z, s.net, s.q, s.bm, kBell, r.theta_hat);
      EXPECT_LT(em_residual(s.net, kBell, frozen, r.theta_hat).cwiseAbs().maxCoeff(), 1e-5 * 40) << seed;
    }
  }
}

// ---------------------------------------------------------------------------
// NR

TEST(NrEstimate, StationaryAndDeterministic) {
  int converged = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario s = scenario(40, 8, 15, 15, seed + 400);
    const EstimateResult r = nr_estimate_quantized(s.z, s.net, s.q, s.bm, kBell, kInit);
    EXPECT_EQ(r.theta_hat, nr_estimate_quantized(s.z, s.net, s.q, s.bm, kBell, kInit).theta_hat);
    if (!r.converged) continue;
    ++converged;
    const LocalQuadratic lq = loglik_quantized_derivatives(s.z, s.net, s.q, s.bm, kBell, r.theta_hat);
    EXPECT_LT(lq.gradient.cwiseAbs().maxCoeff(), 1e-4 * 40) << seed;
  }
  EXPECT_GE(converged, 15);
}

TEST(NrEstimate, AgreesWithEmFromTruth) {
  const Scenario s = scenario(40, 8, 15, 15, 500);
  SolverConfig tight;
  tight.tol = 1e-10;
  tight.max_outer = 5000;
  const EstimateResult em = em_estimate(s.z, s.net, s.q, s.bm, kBell, kTruth, tight);
  const EstimateResult nr = nr_estimate_quantized(s.z, s.net, s.q, s.bm, kBell, kTruth, tight);
  ASSERT_TRUE(em.converged && nr.converged);
  EXPECT_LT((em.theta_hat - nr.theta_hat).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(nr.iterations, em.iterations);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tol = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_outer = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
