#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "arraysync/consensus.hpp"
#include "arraysync/oscillator.hpp"

namespace arraysync {

struct ErrorSnapshot {
  int iteration = 0;
  double std_phase_deg = 0.0;  // cross-node spread of total phase
  double std_freq_ppm = 0.0;   // cross-node spread of frequency
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// Two-pass sample variance (n - 1 denominator).
inline double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return acc / static_cast<double>(v.size() - 1);
}

}  // namespace detail

struct NodeErrors {
  std::vector<double> freq_ppm;   // deviation from the cross-node mean
  std::vector<double> phase_deg;  // total-phase deviation from the mean
};

// Per-node deviations of frequency and of the total phase accrued over one
// update interval, phi = 2*pi*f*T + theta, relative to the array average.
// Means are removed per channel before combining; forming phi first would
// cancel two ~1e5 rad totals and cost several digits of the deviation.
inline NodeErrors node_errors(const ArrayState& state,
                              const OscillatorParams& params) {
  const std::size_t n = state.truth.size();
  NodeErrors e;
  e.freq_ppm.resize(n);
  e.phase_deg.resize(n);
  double f_mean = 0.0, th_mean = 0.0;
  for (const TrueState& t : state.truth) {
    f_mean += t.freq;
    th_mean += t.phase;
  }
  f_mean /= static_cast<double>(n);
  th_mean /= static_cast<double>(n);
  const double two_pi_t = 2.0 * std::numbers::pi * params.T;
  for (std::size_t i = 0; i < n; ++i) {
    const double df = state.truth[i].freq - f_mean;
    const double dth = state.truth[i].phase - th_mean;
    e.freq_ppm[i] = df / params.f_c * 1e6;
    e.phase_deg[i] = (two_pi_t * df + dth) * 180.0 / std::numbers::pi;
  }
  return e;
}

inline ErrorSnapshot snapshot(const ArrayState& state,
                              const OscillatorParams& params) {
  const NodeErrors e = node_errors(state, params);
  ErrorSnapshot s;
  s.iteration = state.iteration;
  s.std_phase_deg = std::sqrt(detail::variance_of(e.phase_deg));
  s.std_freq_ppm = std::sqrt(detail::variance_of(e.freq_ppm));
  return s;
}

struct NoiseChannels {
  double freq_var = 0.0;   // Hz^2 injected per node per iteration
  double phase_var = 0.0;  // rad^2 injected per node per iteration
};

// Per-iteration error power entering each consensus channel: drift plus
// measurement noise on the frequency side; the drift's phase coupling plus
// jitter plus measurement noise on the phase side.
inline NoiseChannels error_variance_channels(const OscillatorParams& p) {
  const double sf2 = adev_sigma(p) * adev_sigma(p);
  const double st2 = jitter_sigma(p) * jitter_sigma(p);
  const EstimationSigmas m = estimation_sigmas(p);
  const double pt = std::numbers::pi * p.T;
  NoiseChannels ch;
  ch.freq_var = sf2 + m.freq * m.freq;
  ch.phase_var = pt * pt * sf2 + m.phase * m.phase + st2;
  return ch;
}

struct TheoryPrediction {
  double sigma_e_sq = 0.0;
  double lambda2 = 0.0;
  double predicted_variance = 0.0;
};

// Steady-state residual variance of one consensus channel: each past
// iteration's injected error survives attenuated by lambda2^(2i).
inline TheoryPrediction theoretical_residual(double sigma_e_sq, double lambda2,
                                             int iterations) {
  if (!(lambda2 >= 0.0) || lambda2 >= 1.0) {
    throw std::invalid_argument("theoretical_residual: lambda2 must be in [0, 1)");
  }
  if (iterations < 1) {
    throw std::invalid_argument("theoretical_residual: iterations must be >= 1");
  }
  const double r = lambda2 * lambda2;
  const double series = r == 1.0
                            ? static_cast<double>(iterations)
                            : r * (1.0 - std::pow(r, iterations)) / (1.0 - r);
  return {sigma_e_sq, lambda2, sigma_e_sq * series};
}

// First window whose mean already sits within rel_tol of the mean over the
// final window. Candidate windows stop before overlapping the reference
// window, so a series still climbing at the end reports no convergence.
inline std::optional<int> detect_convergence(const std::vector<double>& series,
                                             int window = 10,
                                             double rel_tol = 0.1) {
  const int len = static_cast<int>(series.size());
  if (window < 1) throw std::invalid_argument("detect_convergence: window < 1");
  if (len < window) {
    throw std::invalid_argument("detect_convergence: series shorter than window");
  }
  auto window_mean = [&](int k) {
    double sum = 0.0;
    for (int i = k; i < k + window; ++i) sum += series[i];
    return sum / window;
  };
  const double final_mean = window_mean(len - window);
  const int k_max = len >= 2 * window ? len - 2 * window : len - window;
  for (int k = 0; k <= k_max; ++k) {
    if (std::abs(window_mean(k) - final_mean) <= rel_tol * std::abs(final_mean)) {
      return k;
    }
  }
  return std::nullopt;
}

}  // namespace arraysync
