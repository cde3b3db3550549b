#pragma once

// Exhaustive path enumeration, kept independent of the transfer-matrix code.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "polymerlab/lattice.hpp"

namespace polymerlab::testing {

using Path = std::vector<Site>;
using Eta = std::function<double(int, const Site&)>;

inline std::vector<Path> all_paths(int dim, int steps, const Site& start) {
  std::vector<Path> out{Path{start}};
  for (int t = 0; t < steps; ++t) {
    std::vector<Path> grown;
    for (const auto& p : out) {
      for (int i = 0; i < dim; ++i) {
        for (int s : {1, -1}) {
          Path q = p;
          Site next = p.back();
          next[i] += s;
          q.push_back(next);
          grown.push_back(std::move(q));
        }
      }
    }
    out = std::move(grown);
  }
  return out;
}

/// exp(beta * sum_{t=1..n} eta(M + t, path[t])) * (2d)^{-n}
inline double path_weight(const Path& path, int start_time, double beta, const Eta& eta, int dim) {
  double energy = 0.0;
  for (std::size_t t = 1; t < path.size(); ++t) energy += eta(start_time + static_cast<int>(t), path[t]);
  return std::exp(beta * energy) * std::pow(2.0 * dim, -static_cast<double>(path.size() - 1));
}

struct BruteForce {
  double z = 0.0;
  std::map<Site, double> endpoint;                // unnormalized endpoint weights
  std::vector<std::map<Site, double>> marginals;  // normalized, by step
};

inline BruteForce enumerate(int dim, int start_time, int horizon, const Site& x, double beta, const Eta& eta) {
  BruteForce b;
  const int n = horizon - start_time;
  b.marginals.resize(static_cast<std::size_t>(n) + 1);
  const auto paths = all_paths(dim, n, x);
  std::vector<double> weights;
  for (const auto& p : paths) {
    const double w = path_weight(p, start_time, beta, eta, dim);
    weights.push_back(w);
    b.z += w;
    b.endpoint[p.back()] += w;
  }
  for (std::size_t k = 0; k < paths.size(); ++k) {
    for (int t = 0; t <= n; ++t) b.marginals[t][paths[k][t]] += weights[k] / b.z;
  }
  return b;
}

/// Walk probability p_n(0, z) by counting paths.
inline double walk_probability(int dim, int steps, const Site& z) {
  double hits = 0.0;
  const auto paths = all_paths(dim, steps, Site{});
  for (const auto& p : paths) hits += p.back() == z ? 1.0 : 0.0;
  return hits / static_cast<double>(paths.size());
}

/// Sites z with |z|_1 <= r and sum(z) = r (mod 2), by scanning the box.
inline std::vector<Site> admissible_sites(int dim, int r) {
  std::vector<Site> out;
  Site z{};
  std::function<void(int)> rec = [&](int axis) {
    if (axis == dim) {
      int l1 = 0;
      int sum = 0;
      for (int i = 0; i < dim; ++i) {
        l1 += std::abs(z[i]);
        sum += z[i];
      }
      if (l1 <= r && ((sum - r) % 2 + 2) % 2 == 0) out.push_back(z);
      return;
    }
    for (int c = -r; c <= r; ++c) {
      z[axis] = c;
      rec(axis + 1);
    }
    z[axis] = 0;
  };
  rec(0);
  return out;
}

}  // namespace polymerlab::testing
