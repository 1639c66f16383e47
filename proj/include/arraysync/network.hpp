#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arraysync/linalg.hpp"
#include "arraysync/rng.hpp"

namespace arraysync {

// Communication topology. Adjacency lists exclude the implicit self-loop;
// consensus weighting adds it back (each node always hears itself), which
// keeps the mixing matrix primitive.
struct DirectedNetwork {
  int n = 0;
  bool directed = true;
  std::vector<std::pair<int, int>> edges;     // sorted (from, to), no self pairs
  std::vector<std::vector<int>> out_adj;      // out_adj[m]: nodes m sends to
  std::vector<std::vector<int>> in_adj;       // in_adj[n]: nodes n hears from
};

enum class WeightKind { column_stochastic, doubly_stochastic };

struct WeightMatrix {
  MatrixXd w;
  WeightKind kind = WeightKind::column_stochastic;
};

struct SpectralInfo {
  double lambda2 = 0.0;    // second-largest eigenvalue modulus of W
  VectorXd stationary;     // right eigenvector of 1, normalized to sum 1
};

namespace detail {

inline void rebuild_adjacency(DirectedNetwork& net) {
  std::sort(net.edges.begin(), net.edges.end());
  net.out_adj.assign(net.n, {});
  net.in_adj.assign(net.n, {});
  for (const auto& [from, to] : net.edges) {
    net.out_adj[from].push_back(to);
    net.in_adj[to].push_back(from);
  }
}

inline bool covers_all(const std::vector<std::vector<int>>& adj, int n) {
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == n;
}

}  // namespace detail

// Strongly connected for directed nets (every node reaches every other),
// plain connected for undirected ones.
inline bool is_connected(const DirectedNetwork& net) {
  if (net.n <= 1) return net.n == 1;
  if (!detail::covers_all(net.out_adj, net.n)) return false;
  return !net.directed || detail::covers_all(net.in_adj, net.n);
}

// Uniform edge set of round(c * n * (n-1) / 2) connections; for directed nets
// that budget counts ordered pairs, so the expected total (in + out) degree
// is c * (n - 1) per node either way. Resamples until connected.
inline DirectedNetwork generate(int n, double connectivity, bool directed,
                                std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("network: need at least 2 nodes");
  if (!(connectivity > 0.0) || connectivity > 1.0) {
    throw std::invalid_argument("network: connectivity must be in (0, 1]");
  }
  const long long budget =
      std::llround(connectivity * static_cast<double>(n) * (n - 1) / 2.0);
  const long long floor_edges = directed ? n : n - 1;
  if (budget < floor_edges) {
    throw std::invalid_argument(
        "network: edge budget " + std::to_string(budget) + " below the " +
        std::to_string(floor_edges) + " needed for connectivity at n=" +
        std::to_string(n));
  }

  // Enumerate candidate slots once; each attempt takes a random prefix.
  std::vector<std::pair<int, int>> slots;
  for (int a = 0; a < n; ++a) {
    for (int b = directed ? 0 : a + 1; b < n; ++b) {
      if (a != b) slots.emplace_back(a, b);
    }
  }
  if (budget > static_cast<long long>(slots.size())) {
    throw std::invalid_argument("network: edge budget exceeds available pairs");
  }

  constexpr int kMaxAttempts = 10000;
  DirectedNetwork net;
  net.n = n;
  net.directed = directed;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SplitMix64 rng = stream_for(seed, attempt, 0, 0, Draw::network);
    for (long long i = 0; i < budget; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
      std::swap(slots[i], slots[pick(rng)]);
    }
    net.edges.assign(slots.begin(), slots.begin() + budget);
    if (!directed) {
      std::vector<std::pair<int, int>> both;
      both.reserve(2 * net.edges.size());
      for (const auto& [a, b] : net.edges) {
        both.emplace_back(a, b);
        both.emplace_back(b, a);
      }
      net.edges = std::move(both);
    }
    detail::rebuild_adjacency(net);
    if (is_connected(net)) return net;
  }
  throw std::runtime_error(
      "network: no connected topology found in " +
      std::to_string(kMaxAttempts) + " attempts (n=" + std::to_string(n) +
      ", c=" + std::to_string(connectivity) + ")");
}

// Share-equally weights: column m distributes 1/(out-degree + 1) to each
// recipient and to m itself. Columns sum to one by construction.
inline WeightMatrix push_sum_weights(const DirectedNetwork& net) {
  MatrixXd w = MatrixXd::Zero(net.n, net.n);
  for (int m = 0; m < net.n; ++m) {
    const double share = 1.0 / (static_cast<double>(net.out_adj[m].size()) + 1.0);
    w(m, m) = share;
    for (int to : net.out_adj[m]) w(to, m) = share;
  }
  return {std::move(w), WeightKind::column_stochastic};
}

// Metropolis weights for undirected nets: 1 / (1 + max degree) per edge,
// remainder on the diagonal. Symmetric, hence doubly stochastic.
inline WeightMatrix metropolis_weights(const DirectedNetwork& net) {
  if (net.directed) {
    throw std::invalid_argument("metropolis weights need an undirected network");
  }
  MatrixXd w = MatrixXd::Zero(net.n, net.n);
  for (int a = 0; a < net.n; ++a) {
    const double deg_a = static_cast<double>(net.out_adj[a].size());
    double off = 0.0;
    for (int b : net.out_adj[a]) {
      const double deg_b = static_cast<double>(net.out_adj[b].size());
      w(a, b) = 1.0 / (1.0 + std::max(deg_a, deg_b));
      off += w(a, b);
    }
    w(a, a) = 1.0 - off;
  }
  return {std::move(w), WeightKind::doubly_stochastic};
}

// Second-largest eigenvalue modulus via a dense eigensolve (the runner-up is
// often a complex pair on directed nets) and the stationary vector via
// null-space extraction from (W - I).
inline SpectralInfo spectral_info(const WeightMatrix& wm) {
  const MatrixXd& w = wm.w;
  if (w.rows() != w.cols() || w.rows() < 2) {
    throw std::invalid_argument("spectral_info: weight matrix must be square");
  }
  const auto n = w.rows();
  Eigen::EigenSolver<MatrixXd> es(w, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("spectral_info: eigensolver did not converge");
  }
  std::vector<double> moduli(n);
  for (Eigen::Index i = 0; i < n; ++i) moduli[i] = std::abs(es.eigenvalues()[i]);
  std::sort(moduli.begin(), moduli.end(), std::greater<>());
  if (std::abs(moduli[0] - 1.0) > 1e-8) {
    throw std::runtime_error("spectral_info: leading eigenvalue is not 1");
  }

  Eigen::FullPivLU<MatrixXd> lu(w - MatrixXd::Identity(n, n));
  lu.setThreshold(1e-9);
  const MatrixXd kernel = lu.kernel();
  if (kernel.cols() != 1) {
    throw std::runtime_error(
        "spectral_info: stationary vector is not unique (network reducible?)");
  }
  VectorXd pi = kernel.col(0);
  pi /= pi.sum();
  if ((pi.array() <= 0.0).any()) {
    throw std::runtime_error("spectral_info: stationary vector not positive");
  }
  return {moduli[1], std::move(pi)};
}

inline std::uint64_t edge_hash(const DirectedNetwork& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
  };
  eat(static_cast<std::uint64_t>(net.n));
  eat(net.directed ? 1 : 2);
  for (const auto& [a, b] : net.edges) {
    eat(static_cast<std::uint64_t>(a) + 1);
    eat(static_cast<std::uint64_t>(b) + 1);
  }
  return h;
}

// Text adjacency list, one "from to" pair per line, 0-indexed. Undirected
// nets serialize both directions and are recognized on load by symmetry.
inline void write_adjacency(std::ostream& os, const DirectedNetwork& net) {
  for (const auto& [a, b] : net.edges) os << a << ' ' << b << '\n';
}

inline DirectedNetwork read_adjacency(std::istream& is) {
  DirectedNetwork net;
  std::set<std::pair<int, int>> seen;
  std::string line;
  int max_node = -1;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    int a = -1, b = -1;
    if (std::sscanf(line.c_str(), "%d %d", &a, &b) != 2) {
      throw std::invalid_argument("adjacency list: bad line '" + line + "'");
    }
    if (a < 0 || b < 0) throw std::invalid_argument("adjacency list: negative node id");
    if (a == b) throw std::invalid_argument("adjacency list: self loops not allowed");
    if (!seen.insert({a, b}).second) {
      throw std::invalid_argument("adjacency list: duplicate edge");
    }
    max_node = std::max({max_node, a, b});
  }
  if (max_node < 1) throw std::invalid_argument("adjacency list: no edges");
  net.n = max_node + 1;
  net.edges.assign(seen.begin(), seen.end());
  net.directed = false;
  for (const auto& e : net.edges) {
    if (!seen.count({e.second, e.first})) {
      net.directed = true;
      break;
    }
  }
  detail::rebuild_adjacency(net);
  return net;
}

}  // namespace arraysync
