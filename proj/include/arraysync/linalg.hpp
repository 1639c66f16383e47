#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace arraysync {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Mat2 symmetrize(const Mat2& m) { return 0.5 * (m + m.transpose()); }

// Closed-form adjugate inverse. Deterministic and exact up to rounding, which
// matters because covariance entries here span ~22 orders of magnitude
// (Hz^2 vs rad^2) and we want reproducible trajectories.
inline Mat2 inverse_2x2(const Mat2& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double scale = m.cwiseAbs().maxCoeff();
  if (!std::isfinite(det) || det == 0.0 ||
      std::abs(det) < 1e-28 * scale * scale) {
    throw SingularMatrixError("2x2 inverse: matrix is singular or near-singular");
  }
  Mat2 inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

// Symmetrize, then clip negative eigenvalues to the floor (default 0).
// Used after EM M-steps, which can transiently produce indefinite estimates.
inline Mat2 clamp_psd(const Mat2& m, double eig_floor = 0.0) {
  const Mat2 s = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Mat2> es(s);
  Vec2 ev = es.eigenvalues().cwiseMax(eig_floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline bool all_finite(const Mat2& m) { return m.allFinite(); }
inline bool all_finite(const Vec2& v) { return v.allFinite(); }

}  // namespace arraysync
