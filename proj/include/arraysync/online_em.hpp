#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "arraysync/kalman.hpp"
#include "arraysync/linalg.hpp"
#include "arraysync/oscillator.hpp"

namespace arraysync {

// Exponentially forgotten sufficient statistics for the noise covariances.
// xi_* hold the raw alpha-weighted sums; estimates divide by lambda_k and
// only then get clamped, so the recursion itself stays exactly the weighted
// sum of per-step terms.
struct EmAccumulators {
  Mat2 xi_q = Mat2::Zero();
  double xi_freq = 0.0;
  double xi_phase = 0.0;
  std::int64_t k = 0;
};

struct ThetaEstimate {
  Mat2 q = Mat2::Zero();
  Mat2 sigma = Mat2::Zero();
};

enum class EmInitCase { poor_a, good_b };

inline double lambda_k(double alpha, std::int64_t k) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("em: alpha must be in (0, 1]");
  }
  if (k < 1) throw std::invalid_argument("em: step count must be >= 1");
  if (alpha == 1.0) return static_cast<double>(k);
  return (1.0 - std::pow(alpha, static_cast<double>(k))) / (1.0 - alpha);
}

// Deliberately misinformed starting covariances. The poor case guesses the
// drift variance from the update interval alone; the good case knows the
// true process covariance. Both start from the same wrong measurement
// covariance guess.
inline ThetaEstimate init_theta(EmInitCase c, const OscillatorParams& p) {
  ThetaEstimate t;
  t.sigma = Mat2::Zero();
  t.sigma(0, 0) = 1e3;
  t.sigma(1, 1) = 1e-12;
  if (c == EmInitCase::poor_a) {
    const double sf2 = 1.0 / std::sqrt(p.T);
    const double pt = std::numbers::pi * p.T;
    t.q = Mat2::Zero();
    t.q(0, 0) = sf2;
    t.q(1, 1) = pt * pt * sf2;
  } else {
    t.q = q_matrix(p);
  }
  return t;
}

inline ThetaEstimate genie_theta(const OscillatorParams& p) {
  return {q_matrix(p), sigma_matrix(p)};
}

struct EmUpdateResult {
  EmAccumulators acc;
  ThetaEstimate theta;
};

// One M-step: fold this iteration's second moments into the accumulators and
// re-estimate both covariances. The process term is the smoothed expectation
// of the squared state increment; the measurement terms are the expected
// squared innovation against the posterior mean.
inline EmUpdateResult em_update(const EmAccumulators& acc,
                                const LagOneMoments& mom, const Vec2& y,
                                const Vec2& m_post, double alpha,
                                double var_floor = 1e-18) {
  EmUpdateResult out;
  out.acc.k = acc.k + 1;
  const Mat2 term_q = symmetrize(mom.gamma_kk - mom.gamma_lag -
                                 mom.gamma_lag.transpose() + mom.gamma_prev);
  out.acc.xi_q = alpha * acc.xi_q + term_q;
  out.acc.xi_freq =
      alpha * acc.xi_freq + (y(0) * y(0) - 2.0 * y(0) * m_post(0) + mom.gamma_kk(0, 0));
  out.acc.xi_phase =
      alpha * acc.xi_phase + (y(1) * y(1) - 2.0 * y(1) * m_post(1) + mom.gamma_kk(1, 1));

  const double lam = lambda_k(alpha, out.acc.k);
  out.theta.q = clamp_psd(out.acc.xi_q / lam);
  out.theta.sigma = Mat2::Zero();
  out.theta.sigma(0, 0) = std::max(out.acc.xi_freq / lam, var_floor);
  out.theta.sigma(1, 1) = std::max(out.acc.xi_phase / lam, var_floor);
  return out;
}

}  // namespace arraysync
