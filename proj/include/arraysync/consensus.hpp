#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "arraysync/config.hpp"
#include "arraysync/kalman.hpp"
#include "arraysync/network.hpp"
#include "arraysync/online_em.hpp"
#include "arraysync/oscillator.hpp"
#include "arraysync/rng.hpp"

namespace arraysync {

struct ConsensusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ratio-consensus bookkeeping: numerators for both channels plus the share
// scalar that makes the ratio unbiased on directed networks.
struct PushSumState {
  double x_freq = 0.0;
  double x_phase = 0.0;
  double s = 1.0;
};

// Per-node filter bundle. v_prev holds the posterior covariance published to
// the neighborhood last round; everyone reads it while computing this round.
struct NodeFilter {
  KalmanState kf;
  Mat2 v_prev = Mat2::Zero();
  EmAccumulators acc;
  ThetaEstimate theta;
};

struct ArrayState {
  int iteration = 0;
  std::vector<TrueState> truth;
  std::vector<PushSumState> push;
  std::vector<NodeFilter> filters;  // empty when running unfiltered
};

// One synchronous push-sum round: every node mixes the weighted, share-scaled
// estimates it hears, updates its share scalar the same way, and retunes its
// oscillator to the ratio. z[m] carries node m's broadcast (freq, phase).
inline ArrayState psfpc_step(const ArrayState& state, const WeightMatrix& wm,
                             const std::vector<Vec2>& z) {
  const int n = static_cast<int>(state.truth.size());
  if (wm.w.rows() != n || static_cast<int>(z.size()) != n) {
    throw std::invalid_argument("psfpc_step: size mismatch");
  }
  ArrayState out = state;
  out.iteration = state.iteration + 1;
  for (int i = 0; i < n; ++i) {
    double xf = 0.0, xp = 0.0, s = 0.0;
    for (int m = 0; m < n; ++m) {
      const double w = wm.w(i, m);
      if (w == 0.0) continue;
      const double sm = state.push[m].s;
      xf += w * (z[m](0) * sm);
      xp += w * (z[m](1) * sm);
      s += w * sm;
    }
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConsensusError("psfpc_step: share scalar underflow at node " +
                           std::to_string(i));
    }
    out.push[i] = {xf, xp, s};
    out.truth[i] = {xf / s, xp / s};
  }
  return out;
}

// One synchronous averaging round with a doubly-stochastic weight matrix;
// share scalars are not needed and stay untouched.
inline ArrayState dfpc_step(const ArrayState& state, const WeightMatrix& wm,
                            const std::vector<Vec2>& z) {
  if (wm.kind != WeightKind::doubly_stochastic) {
    throw std::invalid_argument("dfpc_step: needs doubly-stochastic weights");
  }
  const int n = static_cast<int>(state.truth.size());
  if (wm.w.rows() != n || static_cast<int>(z.size()) != n) {
    throw std::invalid_argument("dfpc_step: size mismatch");
  }
  ArrayState out = state;
  out.iteration = state.iteration + 1;
  for (int i = 0; i < n; ++i) {
    double f = 0.0, p = 0.0;
    for (int m = 0; m < n; ++m) {
      const double w = wm.w(i, m);
      if (w == 0.0) continue;
      f += w * z[m](0);
      p += w * z[m](1);
    }
    out.truth[i] = {f, p};
  }
  return out;
}

struct TrialRun {
  std::vector<ArrayState> snapshots;  // post-consensus, one per iteration
  DirectedNetwork net;
  SpectralInfo spectral;
  std::uint64_t net_hash = 0;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline bool finite_state(const ArrayState& st) {
  for (const TrueState& t : st.truth) {
    if (!std::isfinite(t.freq) || !std::isfinite(t.phase)) return false;
  }
  for (const PushSumState& p : st.push) {
    if (!std::isfinite(p.x_freq) || !std::isfinite(p.x_phase) ||
        !std::isfinite(p.s)) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

// Full synchronous simulation of one trial: oscillators drift, observe
// themselves, optionally filter, then run one consensus round per iteration.
// All randomness is keyed by (base_seed, trial, node, iteration, purpose), so
// results do not depend on node processing order or trial scheduling.
inline TrialRun run_scenario(const ScenarioConfig& cfg, std::uint64_t trial,
                             const DirectedNetwork* fixed_net = nullptr,
                             const std::vector<int>* node_order = nullptr) {
  validate(cfg);
  const OscillatorParams params = oscillator_params(cfg);
  const bool directed = network_directed(cfg);
  const bool filtered = uses_filter(cfg.algorithm);
  const bool with_em = uses_em(cfg.algorithm) && cfg.em_mode == EmMode::em;

  TrialRun run;
  if (fixed_net != nullptr) {
    if (fixed_net->n != cfg.n_nodes) {
      throw std::invalid_argument("run_scenario: topology node count " +
                                  std::to_string(fixed_net->n) +
                                  " does not match n_nodes");
    }
    if (!directed && fixed_net->directed) {
      throw std::invalid_argument(
          "run_scenario: averaging algorithms need a symmetric topology");
    }
    run.net = *fixed_net;
  } else {
    run.net = generate(cfg.n_nodes, cfg.connectivity, directed,
                       derive_seed(cfg.base_seed, trial, 0, 0, Draw::network));
  }
  const WeightMatrix wm =
      directed ? push_sum_weights(run.net) : metropolis_weights(run.net);
  run.spectral = spectral_info(wm);
  run.net_hash = edge_hash(run.net);

  const int n = cfg.n_nodes;
  ArrayState state;
  state.truth.resize(n);
  state.push.assign(n, PushSumState{});
  for (int i = 0; i < n; ++i) {
    SplitMix64 rng = stream_for(cfg.base_seed, trial, i, 0, Draw::init);
    state.truth[i] = init_state(params, rng);
  }
  if (filtered) {
    state.filters.assign(n, NodeFilter{});
    const ThetaEstimate theta0 = cfg.em_mode == EmMode::genie
                                     ? genie_theta(params)
                                     : init_theta(cfg.em_init_case, params);
    for (NodeFilter& f : state.filters) f.theta = theta0;
  }

  const double sigma_init = params.sigma_init_ppm * 1e-6 * params.f_c;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> s_two_back(n, 1.0);  // share scalars from two rounds ago
  std::vector<Vec2> z(n, Vec2::Zero());
  std::vector<PriorTerm> terms;

  run.snapshots.reserve(cfg.n_iterations);
  for (int k = 1; k <= cfg.n_iterations; ++k) {
    try {
      for (int idx = 0; idx < n; ++idx) {
        const int i = node_order ? (*node_order)[idx] : idx;
        // The pre-drift state is last round's consensus output; the filter
        // restarts from it each round.
        Vec2 m_prior(state.truth[i].freq, state.truth[i].phase);
        Mat2 v_prior;
        if (filtered) {
          if (k == 1) {
            m_prior = Vec2(params.f_c, std::numbers::pi);
            v_prior = Mat2::Zero();
            v_prior(0, 0) = sigma_init * sigma_init;
            v_prior(1, 1) = two_pi * two_pi / 12.0;
          } else {
            terms.clear();
            terms.push_back({state.filters[i].v_prev, wm.w(i, i), s_two_back[i]});
            for (int m : run.net.in_adj[i]) {
              terms.push_back({state.filters[m].v_prev, wm.w(i, m), s_two_back[m]});
            }
            v_prior = consensus_prior(terms, state.push[i].s);
          }
        }

        SplitMix64 rng_t = stream_for(cfg.base_seed, trial, i, k, Draw::transition);
        state.truth[i] = transition(state.truth[i], params, rng_t);
        SplitMix64 rng_o = stream_for(cfg.base_seed, trial, i, k, Draw::observe);
        const Observation obs = observe(state.truth[i], params, rng_o);
        const Vec2 y(obs.freq, obs.phase);

        if (filtered) {
          NodeFilter& f = state.filters[i];
          KalmanState prior;
          prior.m = m_prior;
          prior.v = v_prior;
          const NoiseModel model{f.theta.q, f.theta.sigma};
          const KalmanState pred = predict(prior, model);
          const KalmanState post = update(pred, y, model);
          f.kf = post;
          if (with_em) {
            const Mat2 u = smoother_gain(pred);
            const LagOneMoments mom = lag_one_moments(pred, post, u);
            EmUpdateResult res = em_update(f.acc, mom, y, post.m, cfg.alpha_em);
            f.acc = res.acc;
            f.theta = res.theta;
          }
          z[i] = post.m;
        } else {
          z[i] = y;
        }
      }

      std::vector<double> s_old(n);
      for (int i = 0; i < n; ++i) s_old[i] = state.push[i].s;
      state = directed ? psfpc_step(state, wm, z) : dfpc_step(state, wm, z);
      s_two_back = std::move(s_old);
      if (filtered) {
        for (NodeFilter& f : state.filters) f.v_prev = f.kf.v;
      }
      if (!detail::finite_state(state)) {
        throw ConsensusError("non-finite state");
      }
    } catch (const std::runtime_error& e) {
      run.aborted = true;
      run.abort_reason = "iteration " + std::to_string(k) + ": " + e.what();
      break;
    }
    run.snapshots.push_back(state);
  }
  return run;
}

}  // namespace arraysync
