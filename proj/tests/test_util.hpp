#pragma once

#include <algorithm>
#include <random>
#include <utility>
#include <vector>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"

// Shared generators for property-style tests.

namespace testutil {

// Random tree via random attachment; optionally densified with extra edges.
inline a2gnn::EdgeList random_connected_edges(std::mt19937_64& rng, int n, int extra_edges = 0) {
  a2gnn::EdgeList edges;
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    edges.emplace_back(pick(rng), v);
  }
  int attempts = 0;
  while (extra_edges > 0 && attempts < 100) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    int a = pick(rng), b = pick(rng);
    if (a == b) {
      ++attempts;
      continue;
    }
    if (a > b) std::swap(a, b);
    bool dup = false;
    for (auto& [x, y] : edges)
      if ((x == a && y == b) || (x == b && y == a)) dup = true;
    if (dup) {
      ++attempts;
      continue;
    }
    edges.emplace_back(a, b);
    --extra_edges;
  }
  return edges;
}

inline a2gnn::dmat random_permutation_matrix(std::mt19937_64& rng, int n) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  a2gnn::dmat p(n, n);
  for (int i = 0; i < n; ++i) p(i, perm[i]) = 1.0;
  return p;
}

}  // namespace testutil
