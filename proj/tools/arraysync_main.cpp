// Command-line Monte Carlo driver: runs one scenario or a figure preset and
// writes per-trial and aggregate CSVs.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "arraysync/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOptions {
  std::string config_path;
  std::string preset_name;
  std::string out;
  std::string export_topology;
  bool no_timestamp = false;
  bool trace_nodes = false;
  int threads = 1;
};

int run_one(const arraysync::ScenarioConfig& cfg, const CliOptions& opt,
            const std::string& trial_csv_path,
            std::vector<arraysync::AggregateRow>& rows, int& aborted_total) {
  using namespace arraysync;
  const OscillatorParams params = oscillator_params(cfg);

  std::ofstream trace_os;
  std::ofstream topo_os;
  bool trace_header = true;
  std::function<void(int, const TrialRun&)> trace;
  if (opt.trace_nodes || !opt.export_topology.empty()) {
    if (opt.trace_nodes) {
      const fs::path p = fs::path(trial_csv_path).replace_extension(".nodes.csv");
      trace_os.open(p);
      if (!trace_os) throw std::runtime_error("cannot write " + p.string());
      if (!opt.no_timestamp) trace_os << "# node trace for " << cfg.label << "\n";
    }
    trace = [&](int trial, const TrialRun& run) {
      if (opt.trace_nodes) {
        write_node_trace_csv(trace_os, trial, run, params, trace_header);
        trace_header = false;
      }
      if (trial == 0 && !opt.export_topology.empty()) {
        std::ofstream os(opt.export_topology);
        if (!os) {
          throw std::runtime_error("cannot write " + opt.export_topology);
        }
        write_adjacency(os, run.net);
      }
    };
  }

  const std::vector<TrialRecord> records = run(cfg, opt.threads, trace);
  std::ofstream os(trial_csv_path);
  if (!os) throw std::runtime_error("cannot write " + trial_csv_path);
  write_trial_csv(os, records, !opt.no_timestamp);

  const AggregateRow row = aggregate(cfg, records);
  rows.push_back(row);
  aborted_total += row.aborted_trials;
  if (row.aborted_trials > 0) {
    std::cerr << cfg.label << ": " << row.aborted_trials << " of "
              << cfg.n_trials << " trials aborted\n";
  }
  std::cout << cfg.label << ": mean final std_phase_deg = "
            << row.mean_final_std_phase_deg
            << " deg, mean convergence iteration = "
            << row.mean_convergence_iter << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace arraysync;

  CLI::App app{
      "Monte Carlo simulator for decentralized frequency and phase "
      "synchronization of oscillator arrays over directed networks"};

  CliOptions opt;
  ScenarioConfig flags;  // CLI values land here, then override file/preset
  std::string algorithm_s, em_mode_s, em_init_s;

  app.add_option("--config", opt.config_path,
                 "flat key = value scenario file (TOML-style)");
  app.add_option("--preset", opt.preset_name,
                 "figure preset: fig1a fig1b fig1c fig2a fig2b fig2c fig3 "
                 "fig4 fig5 fig6");
  auto* o_nodes = app.add_option("--n-nodes", flags.n_nodes, "array size");
  auto* o_conn =
      app.add_option("--connectivity", flags.connectivity, "edge density (0, 1]");
  auto* o_snr = app.add_option("--snr-db", flags.snr_db, "estimation SNR in dB");
  auto* o_alg = app.add_option(
      "--algorithm", algorithm_s,
      "psfpc | dfpc | kf_psfpc | kf_dfpc | em_kf_psfpc | em_kf_dfpc");
  auto* o_mode =
      app.add_option("--em-mode", em_mode_s, "em | naive | genie (filtered runs)");
  auto* o_init =
      app.add_option("--em-init-case", em_init_s, "a (poor) | b (good)");
  auto* o_alpha =
      app.add_option("--alpha-em", flags.alpha_em, "EM forgetting factor");
  auto* o_trials = app.add_option("--trials", flags.n_trials, "trial count");
  auto* o_iters =
      app.add_option("--iterations", flags.n_iterations, "consensus rounds");
  auto* o_seed = app.add_option("--seed", flags.base_seed, "base RNG seed");
  auto* o_zero = app.add_flag("--zero-noise", flags.zero_noise,
                              "disable all noise and randomness");
  auto* o_topo = app.add_option("--topology-file", flags.topology_file,
                                "fixed adjacency list instead of sampling");
  app.add_option("--out", opt.out,
                 "trial CSV path (single run) or output directory (preset)");
  app.add_flag("--no-timestamp", opt.no_timestamp,
               "omit timestamp comments for byte-reproducible output");
  app.add_flag("--trace-nodes", opt.trace_nodes,
               "also write per-node error traces (runs sequentially)");
  app.add_option("--export-topology", opt.export_topology,
                 "write trial 0's adjacency list here");
  app.add_option("--threads", opt.threads, "worker threads across trials");

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<ScenarioConfig> configs;
    if (!opt.preset_name.empty()) {
      if (!opt.config_path.empty()) {
        throw std::invalid_argument("--preset and --config are exclusive");
      }
      configs = preset(opt.preset_name);
    } else if (!opt.config_path.empty()) {
      configs = {load_config_file(opt.config_path)};
    } else {
      configs = {ScenarioConfig{}};
    }

    for (ScenarioConfig& cfg : configs) {
      if (*o_nodes) cfg.n_nodes = flags.n_nodes;
      if (*o_conn) cfg.connectivity = flags.connectivity;
      if (*o_snr) cfg.snr_db = flags.snr_db;
      if (*o_alg) cfg.algorithm = algorithm_from_string(algorithm_s);
      if (*o_mode) cfg.em_mode = em_mode_from_string(em_mode_s);
      if (*o_init) cfg.em_init_case = em_init_case_from_string(em_init_s);
      if (*o_alpha) cfg.alpha_em = flags.alpha_em;
      if (*o_trials) cfg.n_trials = flags.n_trials;
      if (*o_iters) cfg.n_iterations = flags.n_iterations;
      if (*o_seed) cfg.base_seed = flags.base_seed;
      if (*o_zero) cfg.zero_noise = flags.zero_noise;
      if (*o_topo) cfg.topology_file = flags.topology_file;
      validate(cfg);
    }

    std::vector<AggregateRow> rows;
    int aborted_total = 0;
    std::string summary_path;
    if (configs.size() == 1) {
      const std::string trial_csv =
          opt.out.empty() ? configs[0].output_path : opt.out;
      summary_path =
          fs::path(trial_csv).replace_extension(".summary.csv").string();
      run_one(configs[0], opt, trial_csv, rows, aborted_total);
    } else {
      const fs::path dir = opt.out.empty() ? fs::path(opt.preset_name) : fs::path(opt.out);
      fs::create_directories(dir);
      summary_path = (dir / "summary.csv").string();
      for (const ScenarioConfig& cfg : configs) {
        run_one(cfg, opt, (dir / cfg.output_path).string(), rows, aborted_total);
      }
    }
    std::ofstream os(summary_path);
    if (!os) throw std::runtime_error("cannot write " + summary_path);
    write_aggregate_csv(os, rows, !opt.no_timestamp);
    if (aborted_total > 0) {
      std::cerr << "total aborted trials: " << aborted_total << "\n";
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
