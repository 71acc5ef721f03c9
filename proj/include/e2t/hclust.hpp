#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/matrix.hpp"

namespace e2t {

struct ClusterLabels {
  std::vector<int> labels;  // 1..k per row
  int k = 0;
};

struct HclustResult {
  ClusterLabels labels;
  std::vector<int> leaf_order;  // dendrogram leaf order, used for heatmaps
};

// Agglomerative clustering with complete linkage, cut at k clusters. Naive
// O(n^3) scan; clusters are identified by their smallest member index and
// ties merge the lexicographically smallest pair, so results are fully
// deterministic. Merging continues past the cut to recover the leaf order.
inline HclustResult hclust_complete(const PairMatrix& d, int k) {
  const std::size_t n = d.n();
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw validation_error("cluster count k must lie in [1, n]");

  std::vector<std::vector<double>> dist(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dist[i][j] = d.at(i, j);

  std::vector<bool> alive(n, true);
  std::vector<std::vector<int>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {static_cast<int>(i)};

  HclustResult res;
  std::size_t n_active = n;
  while (n_active > 1) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        if (dist[i][j] < best) {
          best = dist[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    // Complete linkage: distance to the merged cluster is the max.
    for (std::size_t l = 0; l < n; ++l) {
      if (!alive[l] || l == bi || l == bj) continue;
      const double m = std::max(dist[bi][l], dist[bj][l]);
      dist[bi][l] = m;
      dist[l][bi] = m;
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    members[bj].clear();
    alive[bj] = false;
    --n_active;

    if (n_active == static_cast<std::size_t>(k)) {
      res.labels.k = k;
      res.labels.labels.assign(n, 0);
      int next = 1;
      for (std::size_t c = 0; c < n; ++c) {
        if (!alive[c]) continue;
        for (int row : members[c]) res.labels.labels[static_cast<std::size_t>(row)] = next;
        ++next;
      }
    }
  }

  for (std::size_t c = 0; c < n; ++c)
    if (alive[c]) res.leaf_order = members[c];

  if (static_cast<std::size_t>(k) == n) {
    res.labels.k = k;
    res.labels.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      res.labels.labels[i] = static_cast<int>(i) + 1;
  }
  return res;
}

}  // namespace e2t
