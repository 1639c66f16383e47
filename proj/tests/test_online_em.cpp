#include "arraysync/online_em.hpp"

#include <gtest/gtest.h>

#include "arraysync/rng.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <random>
#include <vector>

using namespace arraysync;

namespace {

LagOneMoments moments_with(const Mat2& gamma_kk, const Mat2& gamma_lag,
                           const Mat2& gamma_prev) {
  LagOneMoments mom;
  mom.gamma_kk = gamma_kk;
  mom.gamma_lag = gamma_lag;
  mom.gamma_prev = gamma_prev;
  return mom;
}

}  // namespace

TEST(LambdaTest, MatchesGeometricPartialSums) {
  EXPECT_DOUBLE_EQ(lambda_k(1.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(lambda_k(1.0, 7), 7.0);
  EXPECT_NEAR(lambda_k(0.5, 3), 1.75, 1e-15);  // 1 + 0.5 + 0.25
  EXPECT_NEAR(lambda_k(0.99, 10000), 100.0, 1e-9);
  EXPECT_THROW(lambda_k(0.0, 1), std::invalid_argument);
  EXPECT_THROW(lambda_k(1.5, 1), std::invalid_argument);
  EXPECT_THROW(lambda_k(0.9, 0), std::invalid_argument);
}

TEST(InitThetaTest, PoorGuessScalesWithInterval) {
  OscillatorParams p;
  const ThetaEstimate t = init_theta(EmInitCase::poor_a, p);
  EXPECT_NEAR(t.q(0, 0), 100.0, 1e-12);  // 1 / sqrt(1e-4)
  EXPECT_NEAR(t.q(1, 1), 9.86960440109e-6, 1e-16);  // (pi T)^2 / sqrt(T)
  EXPECT_DOUBLE_EQ(t.q(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(t.sigma(0, 0), 1e3);
  EXPECT_DOUBLE_EQ(t.sigma(1, 1), 1e-12);
}

TEST(InitThetaTest, GoodGuessKnowsProcessButNotMeasurement) {
  OscillatorParams p;
  const ThetaEstimate t = init_theta(EmInitCase::good_b, p);
  EXPECT_LT((t.q - q_matrix(p)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(t.sigma(0, 0), 1e3);
  EXPECT_DOUBLE_EQ(t.sigma(1, 1), 1e-12);
  // The deliberate guess differs from the truth in both channels.
  const Mat2 true_sigma = sigma_matrix(p);
  EXPECT_GT(std::abs(t.sigma(0, 0) - true_sigma(0, 0)), 1.0);
}

TEST(InitThetaTest, GenieKnowsEverything) {
  OscillatorParams p;
  const ThetaEstimate t = genie_theta(p);
  EXPECT_LT((t.q - q_matrix(p)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.sigma - sigma_matrix(p)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EmUpdateTest, FirstStepEstimateEqualsFirstTerm) {
  Mat2 gamma_kk, gamma_lag, gamma_prev;
  gamma_kk << 4.0, 1.0, 1.0, 3.0;
  gamma_lag << 1.0, 0.5, 0.2, 1.0;
  gamma_prev << 2.0, 0.4, 0.4, 2.0;
  const LagOneMoments mom = moments_with(gamma_kk, gamma_lag, gamma_prev);
  const Vec2 y{2.0, 1.0};
  const Vec2 m_post{1.5, 0.5};
  // lambda_1 = 1 for every alpha, so the first estimate is the raw term.
  for (double alpha : {0.5, 0.99, 1.0}) {
    const EmUpdateResult r = em_update(EmAccumulators{}, mom, y, m_post, alpha);
    Mat2 term_q;
    term_q << 4.0, 0.7, 0.7, 3.0;  // kk - lag - lag' + prev
    EXPECT_LT((r.theta.q - term_q).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.theta.sigma(0, 0), 2.0, 1e-12);  // 4 - 2*2*1.5 + 4
    EXPECT_NEAR(r.theta.sigma(1, 1), 3.0, 1e-12);  // 1 - 2*0.5 + 3
    EXPECT_EQ(r.acc.k, 1);
  }
}

TEST(EmUpdateTest, UnitAlphaIsRunningMean) {
  EmAccumulators acc;
  ThetaEstimate theta;
  double mean_freq = 0.0;
  const int steps = 10;
  for (int k = 1; k <= steps; ++k) {
    const double scale = static_cast<double>(k);
    const LagOneMoments mom = moments_with(scale * Mat2::Identity(),
                                           Mat2::Zero(), Mat2::Zero());
    const Vec2 y{0.0, 0.0};
    const Vec2 m_post{0.0, 0.0};
    const EmUpdateResult r = em_update(acc, mom, y, m_post, 1.0);
    acc = r.acc;
    theta = r.theta;
    mean_freq += scale;
  }
  mean_freq /= steps;  // term per step is scale * I, measurement term = scale
  EXPECT_NEAR(theta.q(0, 0), mean_freq, 1e-12);
  EXPECT_NEAR(theta.q(1, 1), mean_freq, 1e-12);
  EXPECT_NEAR(theta.sigma(0, 0), mean_freq, 1e-12);
  EXPECT_NEAR(theta.sigma(1, 1), mean_freq, 1e-12);
}

TEST(EmUpdateTest, AccumulatorsAreExactlyTheForgettingSum) {
  std::mt19937_64 rng(321);
  std::normal_distribution<double> n01;
  const double alpha = 0.9;
  EmAccumulators acc;
  std::vector<Mat2> terms_q;
  std::vector<double> terms_f, terms_p;
  for (int k = 0; k < 50; ++k) {
    Mat2 a;
    a << n01(rng), n01(rng), n01(rng), n01(rng);
    const Mat2 gamma_kk = symmetrize(a * a.transpose());
    Mat2 b;
    b << n01(rng), n01(rng), n01(rng), n01(rng);
    Mat2 c;
    c << n01(rng), n01(rng), n01(rng), n01(rng);
    const Mat2 gamma_prev = symmetrize(c * c.transpose());
    const Vec2 y{n01(rng), n01(rng)};
    const Vec2 m_post{n01(rng), n01(rng)};
    const LagOneMoments mom = moments_with(gamma_kk, b, gamma_prev);
    acc = em_update(acc, mom, y, m_post, alpha).acc;
    terms_q.push_back(symmetrize(gamma_kk - b - b.transpose() + gamma_prev));
    terms_f.push_back(y(0) * y(0) - 2.0 * y(0) * m_post(0) + gamma_kk(0, 0));
    terms_p.push_back(y(1) * y(1) - 2.0 * y(1) * m_post(1) + gamma_kk(1, 1));
  }
  // Recompute the weighted sums in extended precision, newest term weight 1.
  Eigen::Matrix<long double, 2, 2> sum_q;
  sum_q.setZero();
  long double sum_f = 0.0L, sum_p = 0.0L;
  const int n = static_cast<int>(terms_q.size());
  for (int j = 0; j < n; ++j) {
    const long double w = std::pow(static_cast<long double>(alpha), n - 1 - j);
    for (int i = 0; i < 2; ++i) {
      for (int l = 0; l < 2; ++l) sum_q(i, l) += w * terms_q[j](i, l);
    }
    sum_f += w * terms_f[j];
    sum_p += w * terms_p[j];
  }
  for (int i = 0; i < 2; ++i) {
    for (int l = 0; l < 2; ++l) {
      EXPECT_NEAR(acc.xi_q(i, l), static_cast<double>(sum_q(i, l)), 1e-12);
    }
  }
  EXPECT_NEAR(acc.xi_freq, static_cast<double>(sum_f), 1e-12);
  EXPECT_NEAR(acc.xi_phase, static_cast<double>(sum_p), 1e-12);
  EXPECT_EQ(acc.k, 50);
}

TEST(EmUpdateTest, EstimatesAreFlooredAndClamped) {
  // A wildly inconsistent moment set drives both measurement terms negative
  // and the process term indefinite; outputs must stay valid covariances.
  Mat2 gamma_kk, gamma_lag;
  gamma_kk << 0.1, 0.0, 0.0, 0.1;
  gamma_lag << 1.0, 2.0, 2.0, 1.0;
  const LagOneMoments mom = moments_with(gamma_kk, gamma_lag, Mat2::Zero());
  const Vec2 y{1.0, 1.0};
  const Vec2 m_post{5.0, 5.0};  // term = 1 - 10 + 0.1 < 0 in both channels
  const EmUpdateResult r = em_update(EmAccumulators{}, mom, y, m_post, 0.99);
  EXPECT_DOUBLE_EQ(r.theta.sigma(0, 0), 1e-18);
  EXPECT_DOUBLE_EQ(r.theta.sigma(1, 1), 1e-18);
  Eigen::SelfAdjointEigenSolver<Mat2> es(r.theta.q);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  // Raw accumulator keeps the indefinite term so the recursion stays exact.
  Eigen::SelfAdjointEigenSolver<Mat2> raw(r.acc.xi_q);
  EXPECT_LT(raw.eigenvalues().minCoeff(), 0.0);
}

TEST(EmRecoveryTest, MStepRecoversGeneratingCovariances) {
  // Filter runs at the true parameters; the forgetting-window average of the
  // per-step moment terms must come back to those same covariances.
  Mat2 q_true, sigma_true;
  q_true << 0.5, -0.1, -0.1, 0.3;
  sigma_true << 1.0, 0.0, 0.0, 0.25;
  const NoiseModel model{q_true, sigma_true};
  const Mat2 lq = Eigen::LLT<Mat2>(q_true).matrixL();

  std::mt19937_64 rng(90210);
  std::normal_distribution<double> n01;
  auto draw2 = [&]() { return Vec2{n01(rng), n01(rng)}; };

  Vec2 x{0.0, 0.0};
  KalmanState s;
  s.m = x;
  s.v = q_true;
  EmAccumulators acc;
  ThetaEstimate theta;
  const double alpha = 0.999;
  for (int k = 0; k < 10000; ++k) {
    x += lq * draw2();
    const Vec2 y = x + Vec2{std::sqrt(sigma_true(0, 0)) * n01(rng),
                            std::sqrt(sigma_true(1, 1)) * n01(rng)};
    const KalmanState pred = predict(s, model);
    const KalmanState post = update(pred, y, model);
    const Mat2 u = smoother_gain(pred);
    const LagOneMoments mom = lag_one_moments(pred, post, u);
    const EmUpdateResult r = em_update(acc, mom, y, post.m, alpha);
    acc = r.acc;
    theta = r.theta;
    s = post;
  }
  EXPECT_LT((theta.q - q_true).norm() / q_true.norm(), 0.10);
  EXPECT_NEAR(theta.sigma(0, 0), sigma_true(0, 0), 0.10 * sigma_true(0, 0));
  EXPECT_NEAR(theta.sigma(1, 1), sigma_true(1, 1), 0.10 * sigma_true(1, 1));
}

namespace {

// Single oscillator tracked by the adaptive filter at its real scales; the
// filter consumes its own evolving covariance estimates.
ThetaEstimate run_adaptive(EmInitCase c, int steps) {
  const OscillatorParams p;
  ThetaEstimate theta = init_theta(c, p);
  SplitMix64 rng = stream_for(7, 0, 0, 0, Draw::transition);
  TrueState x = init_state(p, rng);
  KalmanState s;
  s.m = {p.f_c, std::numbers::pi};
  const double sig_f0 = p.sigma_init_ppm * 1e-6 * p.f_c;
  s.v = Mat2::Zero();
  s.v(0, 0) = sig_f0 * sig_f0;
  s.v(1, 1) = (2.0 * std::numbers::pi) * (2.0 * std::numbers::pi) / 12.0;
  EmAccumulators acc;
  for (int k = 1; k <= steps; ++k) {
    x = transition(x, p, rng);
    const Observation obs = observe(x, p, rng);
    const Vec2 y{obs.freq, obs.phase};
    const NoiseModel model{theta.q, theta.sigma};
    const KalmanState pred = predict(s, model);
    const KalmanState post = update(pred, y, model);
    const LagOneMoments mom = lag_one_moments(pred, post, smoother_gain(pred));
    const EmUpdateResult r = em_update(acc, mom, y, post.m, 0.999);
    acc = r.acc;
    theta = r.theta;
    s = post;
  }
  return theta;
}

}  // namespace

TEST(EmRecoveryTest, AdaptiveLoopLearnsMeasurementNoiseFromGoodStart) {
  const OscillatorParams p;
  const Mat2 q_true = q_matrix(p);
  const Mat2 sigma_true = sigma_matrix(p);
  const ThetaEstimate theta = run_adaptive(EmInitCase::good_b, 20000);
  // The frequency measurement variance must climb from its 1e3 guess to the
  // true 1.5e5 scale; the well-observed phase process channel stays accurate.
  EXPECT_NEAR(theta.sigma(0, 0), sigma_true(0, 0), 0.3 * sigma_true(0, 0));
  EXPECT_NEAR(theta.q(1, 1), q_true(1, 1), 0.3 * q_true(1, 1));
  // Frequency drift is weakly identified (its measurement noise is 30x
  // larger), so only hold it to a factor-of-two band.
  EXPECT_GT(theta.q(0, 0), 0.5 * q_true(0, 0));
  EXPECT_LT(theta.q(0, 0), 2.0 * q_true(0, 0));
  // Phase measurements are effectively exact at these scales; the estimate
  // just has to stay negligible against the phase process noise.
  EXPECT_LT(theta.sigma(1, 1), 1e-6 * q_true(1, 1));
}

TEST(EmRecoveryTest, PoorStartStillLearnsTheObservableChannel) {
  const OscillatorParams p;
  const Mat2 q_true = q_matrix(p);
  const Mat2 sigma_true = sigma_matrix(p);
  const ThetaEstimate theta = run_adaptive(EmInitCase::poor_a, 20000);
  EXPECT_NEAR(theta.q(1, 1), q_true(1, 1), 0.3 * q_true(1, 1));
  // The frequency channel lands in a local optimum that misattributes drift
  // to measurement noise; it still finds the right order of magnitude.
  EXPECT_GT(theta.sigma(0, 0), 0.25 * sigma_true(0, 0));
  EXPECT_LT(theta.sigma(0, 0), 4.0 * sigma_true(0, 0));
  EXPECT_LT(theta.q(0, 0), q_true(0, 0));
}
