#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "arraysync/linalg.hpp"

namespace arraysync {

// Free-running oscillator with a frequency random walk sized from short-term
// Allan deviation, white phase jitter sized from integrated phase noise, and
// measurement noise at the estimator bounds for an L-sample observation.
struct OscillatorParams {
  double f_c = 1e9;              // nominal carrier, Hz
  double beta1 = 5e-19;          // ADEV coefficient of 1/T
  double beta2 = 5e-19;          // ADEV coefficient of T
  double a_dbc = -53.46;         // integrated phase noise, dBc (-inf allowed)
  double sigma_init_ppm = 100.0; // initial frequency accuracy, ppm of f_c
  double T = 1e-4;               // update interval, s
  double f_s = 1e7;              // estimator sampling rate, Hz
  double snr_linear = 1e3;       // estimator input SNR (+inf allowed)
  bool fixed_phase_init = false; // pin theta(0)=0 instead of U(0, 2pi)
};

struct TrueState {
  double freq = 0.0;   // Hz
  double phase = 0.0;  // rad, unwrapped
};

struct Observation {
  double freq = 0.0;
  double phase = 0.0;
};

inline void validate(const OscillatorParams& p) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("oscillator params: " + what);
  };
  if (!(p.f_c > 0.0)) fail("f_c must be > 0");
  if (!(p.T > 0.0)) fail("T must be > 0");
  if (!(p.f_s > 0.0)) fail("f_s must be > 0");
  if (p.beta1 < 0.0 || p.beta2 < 0.0) fail("beta coefficients must be >= 0");
  if (p.sigma_init_ppm < 0.0) fail("sigma_init_ppm must be >= 0");
  if (!(p.snr_linear > 0.0)) fail("snr_linear must be > 0");
  if (std::isnan(p.a_dbc) || p.a_dbc == HUGE_VAL) fail("a_dbc must be finite or -inf");
  if (p.T * p.f_s < 1.0) fail("observation length T*f_s must be >= 1 sample");
}

// Per-interval frequency drift std dev, from the two-term ADEV model.
inline double adev_sigma(const OscillatorParams& p) {
  return p.f_c * std::sqrt(p.beta1 / p.T + p.beta2 * p.T);
}

// Per-interval phase jitter std dev from the integrated phase noise power.
inline double jitter_sigma(const OscillatorParams& p) {
  return std::sqrt(2.0 * std::pow(10.0, p.a_dbc / 10.0));
}

struct EstimationSigmas {
  double freq = 0.0;   // Hz
  double phase = 0.0;  // rad
};

// Measurement noise std devs for a single-tone estimate over L = T*f_s
// samples at the given SNR (frequency/phase estimation bounds).
inline EstimationSigmas estimation_sigmas(const OscillatorParams& p) {
  const double L = p.T * p.f_s;
  const double two_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;
  EstimationSigmas s;
  s.freq = p.f_c * std::sqrt(6.0 / (two_pi_sq * L * L * L * p.snr_linear));
  s.phase = 2.0 / (L * p.snr_linear);
  return s;
}

// Joint covariance of one interval's (drift, jitter) increment. The phase
// picks up -pi*T times the same frequency draw, hence the cross terms.
inline Mat2 q_matrix(const OscillatorParams& p) {
  const double sf2 = adev_sigma(p) * adev_sigma(p);
  const double st2 = jitter_sigma(p) * jitter_sigma(p);
  const double pt = std::numbers::pi * p.T;
  Mat2 q;
  q << sf2, -pt * sf2, -pt * sf2, pt * pt * sf2 + st2;
  return q;
}

inline Mat2 sigma_matrix(const OscillatorParams& p) {
  const EstimationSigmas s = estimation_sigmas(p);
  Mat2 m = Mat2::Zero();
  m(0, 0) = s.freq * s.freq;
  m(1, 1) = s.phase * s.phase;
  return m;
}

template <class Rng>
TrueState init_state(const OscillatorParams& p, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
  TrueState s;
  s.freq = p.f_c + p.sigma_init_ppm * 1e-6 * p.f_c * gauss(rng);
  s.phase = p.fixed_phase_init ? 0.0 : uni(rng);
  return s;
}

// One oscillator interval. The jitter drawn for the frequency walk also
// steers the phase through the -pi*T coupling; that exact functional
// dependence is what q_matrix's off-diagonals describe.
template <class Rng>
TrueState transition(const TrueState& s, const OscillatorParams& p, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double df = adev_sigma(p) * gauss(rng);
  const double dth = jitter_sigma(p) * gauss(rng);
  TrueState next;
  next.freq = s.freq + df;
  next.phase = s.phase - std::numbers::pi * p.T * df + dth;
  return next;
}

template <class Rng>
Observation observe(const TrueState& s, const OscillatorParams& p, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const EstimationSigmas sig = estimation_sigmas(p);
  Observation y;
  y.freq = s.freq + sig.freq * gauss(rng);
  y.phase = s.phase + sig.phase * gauss(rng);
  return y;
}

}  // namespace arraysync
