#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "arraysync/online_em.hpp"
#include "arraysync/oscillator.hpp"

namespace arraysync {

enum class Algorithm {
  psfpc,        // push-sum ratio consensus on raw estimates, directed
  dfpc,         // doubly-stochastic averaging on raw estimates, undirected
  kf_psfpc,     // filtered push-sum, covariances fixed (naive or genie)
  kf_dfpc,
  em_kf_psfpc,  // filtered push-sum with online covariance learning
  em_kf_dfpc,
};

enum class EmMode { em, naive, genie };

struct ScenarioConfig {
  std::string label = "custom";
  Algorithm algorithm = Algorithm::psfpc;
  EmMode em_mode = EmMode::em;
  EmInitCase em_init_case = EmInitCase::good_b;
  int n_nodes = 20;
  double connectivity = 0.2;
  double snr_db = 30.0;
  double T_s = 1e-4;
  double f_s_hz = 1e7;
  double f_c_hz = 1e9;
  double beta1 = 5e-19;
  double beta2 = 5e-19;
  double a_dbc = -53.46;
  double sigma_init_ppm = 100.0;
  double alpha_em = 0.99;
  int n_iterations = 100;
  int n_trials = 100;
  std::uint64_t base_seed = 1;
  bool zero_noise = false;       // kills process, measurement and init noise
  std::string topology_file;    // fixed topology instead of per-trial sampling
  std::string output_path = "run.csv";
};

inline bool uses_push_sum(Algorithm a) {
  return a == Algorithm::psfpc || a == Algorithm::kf_psfpc ||
         a == Algorithm::em_kf_psfpc;
}

inline bool uses_filter(Algorithm a) {
  return a != Algorithm::psfpc && a != Algorithm::dfpc;
}

inline bool uses_em(Algorithm a) {
  return a == Algorithm::em_kf_psfpc || a == Algorithm::em_kf_dfpc;
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::psfpc: return "psfpc";
    case Algorithm::dfpc: return "dfpc";
    case Algorithm::kf_psfpc: return "kf_psfpc";
    case Algorithm::kf_dfpc: return "kf_dfpc";
    case Algorithm::em_kf_psfpc: return "em_kf_psfpc";
    case Algorithm::em_kf_dfpc: return "em_kf_dfpc";
  }
  return "?";
}

inline std::string to_string(EmMode m) {
  switch (m) {
    case EmMode::em: return "em";
    case EmMode::naive: return "naive";
    case EmMode::genie: return "genie";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "psfpc") return Algorithm::psfpc;
  if (s == "dfpc") return Algorithm::dfpc;
  if (s == "kf_psfpc") return Algorithm::kf_psfpc;
  if (s == "kf_dfpc") return Algorithm::kf_dfpc;
  if (s == "em_kf_psfpc") return Algorithm::em_kf_psfpc;
  if (s == "em_kf_dfpc") return Algorithm::em_kf_dfpc;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

inline EmMode em_mode_from_string(std::string_view s) {
  if (s == "em") return EmMode::em;
  if (s == "naive") return EmMode::naive;
  if (s == "genie") return EmMode::genie;
  throw std::invalid_argument("unknown em mode '" + std::string(s) + "'");
}

inline EmInitCase em_init_case_from_string(std::string_view s) {
  if (s == "a" || s == "poor") return EmInitCase::poor_a;
  if (s == "b" || s == "good") return EmInitCase::good_b;
  throw std::invalid_argument("unknown em init case '" + std::string(s) + "'");
}

inline OscillatorParams oscillator_params(const ScenarioConfig& c) {
  OscillatorParams p;
  p.f_c = c.f_c_hz;
  p.T = c.T_s;
  p.f_s = c.f_s_hz;
  p.beta1 = c.beta1;
  p.beta2 = c.beta2;
  p.a_dbc = c.a_dbc;
  p.sigma_init_ppm = c.sigma_init_ppm;
  p.snr_linear = std::pow(10.0, c.snr_db / 10.0);
  if (c.zero_noise) {
    p.beta1 = 0.0;
    p.beta2 = 0.0;
    p.a_dbc = -HUGE_VAL;
    p.snr_linear = HUGE_VAL;
    p.sigma_init_ppm = 0.0;
    p.fixed_phase_init = true;
  }
  return p;
}

inline bool network_directed(const ScenarioConfig& c) {
  return uses_push_sum(c.algorithm);
}

inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("scenario config: " + what);
  };
  if (c.n_nodes < 2) fail("n_nodes must be >= 2");
  if (!(c.connectivity > 0.0) || c.connectivity > 1.0) {
    fail("connectivity must be in (0, 1]");
  }
  if (c.n_iterations < 1) fail("n_iterations must be >= 1");
  if (c.n_trials < 1) fail("n_trials must be >= 1");
  if (!(c.alpha_em > 0.0) || c.alpha_em > 1.0) fail("alpha_em must be in (0, 1]");
  if (uses_em(c.algorithm) && c.em_mode != EmMode::em) {
    fail("algorithm " + to_string(c.algorithm) + " requires em_mode=em");
  }
  if (!uses_em(c.algorithm) && uses_filter(c.algorithm) && c.em_mode == EmMode::em) {
    fail("algorithm " + to_string(c.algorithm) +
         " runs fixed covariances; pick em_mode naive or genie, or an em_kf variant");
  }
  validate(oscillator_params(c));
}

// Flat key = value file, '#' comments, optional quotes around strings.
// A deliberate subset of TOML so the files stay readable by standard tools.
inline std::map<std::string, std::string> parse_key_values(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    }
    out[key] = value;
  }
  return out;
}

inline void apply_key_value(ScenarioConfig& c, const std::string& key,
                            const std::string& value) {
  auto as_double = [&] {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) {
      throw std::invalid_argument("config key '" + key + "': bad number '" +
                                  value + "'");
    }
    return v;
  };
  auto as_int = [&] {
    const double v = as_double();
    if (v != std::floor(v)) {
      throw std::invalid_argument("config key '" + key + "': expected integer");
    }
    return static_cast<long long>(v);
  };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected bool");
  };
  if (key == "label") c.label = value;
  else if (key == "algorithm") c.algorithm = algorithm_from_string(value);
  else if (key == "em_mode") c.em_mode = em_mode_from_string(value);
  else if (key == "em_init_case") c.em_init_case = em_init_case_from_string(value);
  else if (key == "n_nodes") c.n_nodes = static_cast<int>(as_int());
  else if (key == "connectivity") c.connectivity = as_double();
  else if (key == "snr_db") c.snr_db = as_double();
  else if (key == "T_s") c.T_s = as_double();
  else if (key == "f_s_hz") c.f_s_hz = as_double();
  else if (key == "f_c_hz") c.f_c_hz = as_double();
  else if (key == "beta1") c.beta1 = as_double();
  else if (key == "beta2") c.beta2 = as_double();
  else if (key == "a_dbc") c.a_dbc = as_double();
  else if (key == "sigma_init_ppm") c.sigma_init_ppm = as_double();
  else if (key == "alpha_em") c.alpha_em = as_double();
  else if (key == "n_iterations") c.n_iterations = static_cast<int>(as_int());
  else if (key == "n_trials") c.n_trials = static_cast<int>(as_int());
  else if (key == "base_seed") c.base_seed = static_cast<std::uint64_t>(as_int());
  else if (key == "zero_noise") c.zero_noise = as_bool();
  else if (key == "topology_file") c.topology_file = value;
  else if (key == "output_path") c.output_path = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
  ScenarioConfig c;
  for (const auto& [k, v] : parse_key_values(is)) apply_key_value(c, k, v);
  return c;
}

}  // namespace arraysync
