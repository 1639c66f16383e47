#pragma once

#include <span>
#include <stdexcept>

#include "arraysync/linalg.hpp"

namespace arraysync {

// Two-state (frequency, phase) filter with identity dynamics and identity
// observation map; all structure lives in the noise covariances.
struct NoiseModel {
  Mat2 q = Mat2::Zero();      // process covariance per interval
  Mat2 sigma = Mat2::Zero();  // measurement covariance
};

// m/v hold the newest posterior; m_pred/v_pred keep the same iteration's
// prediction so the one-lag smoothing below has everything it needs.
struct KalmanState {
  Vec2 m = Vec2::Zero();
  Mat2 v = Mat2::Zero();
  Vec2 m_pred = Vec2::Zero();
  Mat2 v_pred = Mat2::Zero();
};

inline KalmanState predict(const KalmanState& s, const NoiseModel& model) {
  KalmanState out = s;
  out.m_pred = s.m;
  out.v_pred = symmetrize(s.v + model.q);
  return out;
}

inline KalmanState update(const KalmanState& s, const Vec2& y,
                          const NoiseModel& model) {
  const Mat2 gain = s.v_pred * inverse_2x2(s.v_pred + model.sigma);
  KalmanState out = s;
  out.m = s.m_pred + gain * (y - s.m_pred);
  out.v = symmetrize(s.v_pred - gain * s.v_pred);
  return out;
}

// Smoother gain U = V(k-1|k-1) * V(k|k-1)^-1, valid on a post-predict state
// where v still holds the prior and v_pred the prediction.
inline Mat2 smoother_gain(const KalmanState& s) {
  return s.v * inverse_2x2(s.v_pred);
}

// Second-moment blocks of the joint posterior of (x_k, x_{k-1}) given all
// observations through k. `pred` is the post-predict state, `post` the
// post-update state of the same iteration.
struct LagOneMoments {
  Mat2 gamma_kk = Mat2::Zero();      // E[x_k x_k']
  Mat2 gamma_lag = Mat2::Zero();     // E[x_k x_{k-1}']
  Mat2 gamma_prev = Mat2::Zero();    // E[x_{k-1} x_{k-1}']
  Vec2 m_smooth = Vec2::Zero();      // E[x_{k-1}]
  Mat2 v_smooth = Mat2::Zero();      // Cov[x_{k-1}]
};

inline LagOneMoments lag_one_moments(const KalmanState& pred,
                                     const KalmanState& post, const Mat2& u) {
  LagOneMoments out;
  out.v_smooth =
      symmetrize(pred.v + u * (post.v - pred.v_pred) * u.transpose());
  out.m_smooth = pred.m + u * (post.m - pred.m_pred);
  out.gamma_prev =
      symmetrize(out.v_smooth + out.m_smooth * out.m_smooth.transpose());
  out.gamma_lag = post.m * out.m_smooth.transpose() + post.v * u.transpose();
  out.gamma_kk = symmetrize(post.v + post.m * post.m.transpose());
  return out;
}

// One in-neighbor's contribution to the next prior covariance: its posterior
// covariance from the previous round, the mixing weight into this node, and
// its share scalar from two rounds back.
struct PriorTerm {
  Mat2 v = Mat2::Zero();
  double weight = 0.0;
  double s_prev2 = 1.0;
};

// Covariance of the ratio-consensus output used to reinitialize the filter:
// each neighbor's posterior enters with the square of the numerator weight it
// carried, normalized by this node's own share scalar.
inline Mat2 consensus_prior(std::span<const PriorTerm> terms, double s_self) {
  if (!(s_self > 0.0)) {
    throw std::invalid_argument("consensus_prior: share scalar must be > 0");
  }
  Mat2 v = Mat2::Zero();
  for (const PriorTerm& t : terms) {
    const double eta = (t.weight * t.s_prev2) * (t.weight * t.s_prev2);
    v += eta * t.v;
  }
  return symmetrize(v / (s_self * s_self));
}

}  // namespace arraysync
