#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "arraysync/analysis.hpp"
#include "arraysync/config.hpp"
#include "arraysync/consensus.hpp"

namespace arraysync {

constexpr int kConvergenceWindow = 10;
constexpr double kConvergenceRelTol = 0.1;

struct TrialRecord {
  int trial = 0;
  std::uint64_t net_hash = 0;
  double lambda2 = 0.0;
  std::vector<ErrorSnapshot> iterations;
  bool aborted = false;
  std::string abort_reason;
  std::optional<int> convergence_iter;  // iteration number, 1-based
  double final_std_phase_deg = std::nan("");
  double final_std_freq_ppm = std::nan("");
};

inline TrialRecord make_record(int trial, const TrialRun& run,
                               const OscillatorParams& params) {
  TrialRecord rec;
  rec.trial = trial;
  rec.net_hash = run.net_hash;
  rec.lambda2 = run.spectral.lambda2;
  rec.aborted = run.aborted;
  rec.abort_reason = run.abort_reason;
  rec.iterations.reserve(run.snapshots.size());
  std::vector<double> phase_series;
  phase_series.reserve(run.snapshots.size());
  for (const ArrayState& st : run.snapshots) {
    rec.iterations.push_back(snapshot(st, params));
    phase_series.push_back(rec.iterations.back().std_phase_deg);
  }
  if (!rec.iterations.empty()) {
    rec.final_std_phase_deg = rec.iterations.back().std_phase_deg;
    rec.final_std_freq_ppm = rec.iterations.back().std_freq_ppm;
  }
  if (!rec.aborted &&
      static_cast<int>(phase_series.size()) >= kConvergenceWindow) {
    if (auto k = detect_convergence(phase_series, kConvergenceWindow,
                                    kConvergenceRelTol)) {
      rec.convergence_iter = rec.iterations[*k].iteration;
    }
  }
  return rec;
}

// Runs all trials of a scenario. Each trial is fully keyed by its index, so
// scheduling across the worker pool cannot change any result; records come
// back ordered by trial either way. A trace callback forces sequential
// execution and sees every full trial state history in order.
inline std::vector<TrialRecord> run(
    const ScenarioConfig& cfg, int threads = 1,
    const std::function<void(int, const TrialRun&)>& trace = nullptr) {
  validate(cfg);
  const OscillatorParams params = oscillator_params(cfg);

  DirectedNetwork fixed;
  const DirectedNetwork* fixed_ptr = nullptr;
  if (!cfg.topology_file.empty()) {
    std::ifstream is(cfg.topology_file);
    if (!is) {
      throw std::invalid_argument("cannot open topology file '" +
                                  cfg.topology_file + "'");
    }
    fixed = read_adjacency(is);
    fixed_ptr = &fixed;
  }

  std::vector<TrialRecord> records(cfg.n_trials);
  if (threads < 1) threads = 1;
  if (trace || threads == 1 || cfg.n_trials == 1) {
    for (int t = 0; t < cfg.n_trials; ++t) {
      const TrialRun one = run_scenario(cfg, t, fixed_ptr);
      if (trace) trace(t, one);
      records[t] = make_record(t, one, params);
    }
    return records;
  }

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= cfg.n_trials || failed.load()) return;
      try {
        records[t] = make_record(t, run_scenario(cfg, t, fixed_ptr), params);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = std::min(threads, cfg.n_trials);
  pool.reserve(n_workers);
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return records;
}

struct AggregateRow {
  std::string scenario;
  int n = 0;
  double connectivity = 0.0;
  double snr_db = 0.0;
  std::string algorithm;
  std::string em_mode;
  double mean_final_std_phase_deg = std::nan("");
  double std_final_std_phase_deg = std::nan("");
  double mean_convergence_iter = std::nan("");
  int aborted_trials = 0;
};

// Trial-level summary. Aborted trials are excluded from the means; trials
// that never settle count their full length toward the convergence mean.
inline AggregateRow aggregate(const ScenarioConfig& cfg,
                              const std::vector<TrialRecord>& records) {
  AggregateRow row;
  row.scenario = cfg.label;
  row.n = cfg.n_nodes;
  row.connectivity = cfg.connectivity;
  row.snr_db = cfg.snr_db;
  row.algorithm = to_string(cfg.algorithm);
  row.em_mode = uses_filter(cfg.algorithm) ? to_string(cfg.em_mode) : "none";
  std::vector<double> finals;
  double conv_sum = 0.0;
  int conv_count = 0;
  for (const TrialRecord& r : records) {
    if (r.aborted) {
      ++row.aborted_trials;
      continue;
    }
    finals.push_back(r.final_std_phase_deg);
    conv_sum += r.convergence_iter ? static_cast<double>(*r.convergence_iter)
                                   : static_cast<double>(cfg.n_iterations);
    ++conv_count;
  }
  if (!finals.empty()) {
    row.mean_final_std_phase_deg = detail::mean_of(finals);
    row.std_final_std_phase_deg = std::sqrt(detail::variance_of(finals));
    row.mean_convergence_iter = conv_sum / conv_count;
  }
  return row;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string timestamp_line() {
  std::time_t now = std::time(nullptr);
  char buf[64];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string("# generated ") + buf + "\n";
}

}  // namespace detail

inline void write_trial_csv(std::ostream& os,
                            const std::vector<TrialRecord>& records,
                            bool with_timestamp) {
  if (with_timestamp) os << detail::timestamp_line();
  os << "trial,iteration,std_phase_deg,std_freq_ppm,lambda2,aborted\n";
  for (const TrialRecord& r : records) {
    const char* aborted = r.aborted ? "1" : "0";
    if (r.iterations.empty()) {
      os << r.trial << ",0,nan,nan," << detail::fmt(r.lambda2) << ','
         << aborted << '\n';
      continue;
    }
    for (const ErrorSnapshot& s : r.iterations) {
      os << r.trial << ',' << s.iteration << ','
         << detail::fmt(s.std_phase_deg) << ',' << detail::fmt(s.std_freq_ppm)
         << ',' << detail::fmt(r.lambda2) << ',' << aborted << '\n';
    }
  }
}

inline void write_aggregate_csv(std::ostream& os,
                                const std::vector<AggregateRow>& rows,
                                bool with_timestamp) {
  if (with_timestamp) os << detail::timestamp_line();
  os << "scenario,N,c,snr_db,algorithm,em_mode,mean_final_std_phase_deg,"
        "std_final_std_phase_deg,mean_convergence_iter\n";
  for (const AggregateRow& r : rows) {
    os << r.scenario << ',' << r.n << ',' << detail::fmt(r.connectivity) << ','
       << detail::fmt(r.snr_db) << ',' << r.algorithm << ',' << r.em_mode
       << ',' << detail::fmt(r.mean_final_std_phase_deg) << ','
       << detail::fmt(r.std_final_std_phase_deg) << ','
       << detail::fmt(r.mean_convergence_iter) << '\n';
  }
}

// Per-node trace rows for single-trial figure runs.
inline void write_node_trace_csv(std::ostream& os, int trial,
                                 const TrialRun& run,
                                 const OscillatorParams& params,
                                 bool header) {
  if (header) os << "trial,iteration,node,freq_err_ppm,phase_err_deg\n";
  for (const ArrayState& st : run.snapshots) {
    const NodeErrors e = node_errors(st, params);
    for (std::size_t i = 0; i < e.freq_ppm.size(); ++i) {
      os << trial << ',' << st.iteration << ',' << i << ','
         << detail::fmt(e.freq_ppm[i]) << ',' << detail::fmt(e.phase_deg[i])
         << '\n';
    }
  }
}

// Scenario lists matching the published figure setups (f_c = 1 GHz,
// f_s = 10 MHz, T = 0.1 ms throughout; 10^3 trials for averaged figures).
inline std::vector<ScenarioConfig> preset(const std::string& name) {
  auto base = [](const std::string& label) {
    ScenarioConfig c;
    c.label = label;
    c.n_iterations = 100;
    c.snr_db = 30.0;
    c.output_path = label + ".csv";
    return c;
  };
  auto single_trace = [&](const std::string& label, int n, double snr) {
    ScenarioConfig c = base(label);
    c.algorithm = Algorithm::psfpc;
    c.n_nodes = n;
    c.connectivity = 0.2;
    c.snr_db = snr;
    c.n_trials = 1;
    return c;
  };
  // Node-level frequency traces (a, b, c) and the matching phase traces:
  // the same single-trial runs, plotted per channel.
  if (name == "fig1a" || name == "fig2a") return {single_trace(name, 20, 0.0)};
  if (name == "fig1b" || name == "fig2b") return {single_trace(name, 100, 0.0)};
  if (name == "fig1c" || name == "fig2c") return {single_trace(name, 100, 30.0)};

  std::vector<ScenarioConfig> out;
  char label[96];
  if (name == "fig3") {
    // Final phase spread vs connectivity, raw consensus on directed and
    // undirected networks.
    for (Algorithm alg : {Algorithm::psfpc, Algorithm::dfpc}) {
      for (int n : {20, 60, 100}) {
        for (double c : {0.2, 0.35, 0.5}) {
          std::snprintf(label, sizeof(label), "fig3_%s_N%d_c%.2f",
                        to_string(alg).c_str(), n, c);
          ScenarioConfig cfg = base(label);
          cfg.algorithm = alg;
          cfg.n_nodes = n;
          cfg.connectivity = c;
          cfg.n_trials = 1000;
          out.push_back(cfg);
        }
      }
    }
    return out;
  }
  if (name == "fig4") {
    // Phase spread vs iterations for the four corner (N, c) pairs.
    for (Algorithm alg : {Algorithm::psfpc, Algorithm::dfpc}) {
      for (int n : {20, 100}) {
        for (double c : {0.2, 0.5}) {
          std::snprintf(label, sizeof(label), "fig4_%s_N%d_c%.2f",
                        to_string(alg).c_str(), n, c);
          ScenarioConfig cfg = base(label);
          cfg.algorithm = alg;
          cfg.n_nodes = n;
          cfg.connectivity = c;
          cfg.n_trials = 1000;
          out.push_back(cfg);
        }
      }
    }
    return out;
  }
  if (name == "fig5") {
    // Filtered push-sum vs iterations at c = 0.2: online-EM and frozen
    // covariances under both starting guesses, plus the known-covariance
    // reference.
    for (int n : {20, 40}) {
      for (EmInitCase init : {EmInitCase::poor_a, EmInitCase::good_b}) {
        const char ic = init == EmInitCase::poor_a ? 'a' : 'b';
        std::snprintf(label, sizeof(label), "fig5_em_%c_N%d", ic, n);
        ScenarioConfig em = base(label);
        em.algorithm = Algorithm::em_kf_psfpc;
        em.em_mode = EmMode::em;
        em.em_init_case = init;
        em.n_nodes = n;
        em.n_trials = 1000;
        out.push_back(em);

        std::snprintf(label, sizeof(label), "fig5_naive_%c_N%d", ic, n);
        ScenarioConfig naive = em;
        naive.label = label;
        naive.output_path = std::string(label) + ".csv";
        naive.algorithm = Algorithm::kf_psfpc;
        naive.em_mode = EmMode::naive;
        out.push_back(naive);
      }
      std::snprintf(label, sizeof(label), "fig5_genie_N%d", n);
      ScenarioConfig genie = base(label);
      genie.algorithm = Algorithm::kf_psfpc;
      genie.em_mode = EmMode::genie;
      genie.n_nodes = n;
      genie.n_trials = 1000;
      out.push_back(genie);
    }
    return out;
  }
  if (name == "fig6") {
    // Final phase spread vs N, case (b) starting guess, six variants.
    struct Combo {
      Algorithm alg;
      EmMode mode;
    };
    const Combo combos[] = {
        {Algorithm::em_kf_psfpc, EmMode::em},
        {Algorithm::kf_psfpc, EmMode::naive},
        {Algorithm::kf_psfpc, EmMode::genie},
        {Algorithm::em_kf_dfpc, EmMode::em},
        {Algorithm::kf_dfpc, EmMode::naive},
        {Algorithm::kf_dfpc, EmMode::genie},
    };
    for (const Combo& combo : combos) {
      for (double c : {0.2, 0.5}) {
        for (int n : {20, 40, 60, 80, 100}) {
          std::snprintf(label, sizeof(label), "fig6_%s_%s_c%.2f_N%d",
                        to_string(combo.alg).c_str(),
                        to_string(combo.mode).c_str(), c, n);
          ScenarioConfig cfg = base(label);
          cfg.algorithm = combo.alg;
          cfg.em_mode = combo.mode;
          cfg.em_init_case = EmInitCase::good_b;
          cfg.n_nodes = n;
          cfg.connectivity = c;
          cfg.n_trials = 1000;
          out.push_back(cfg);
        }
      }
    }
    return out;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace arraysync
