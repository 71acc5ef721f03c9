#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/dataset.hpp"
#include "e2t/forest.hpp"
#include "e2t/matrix.hpp"

namespace e2t {

enum class NormalizationMode {
  jacobson_range,  // mse / (mse_max * p_t), mse_max = (range of Y)^2 / 9
  abs_node_mean,   // mse / |node mean|
};

// Source of the per-leaf statistics behind the local fit weights: every
// training row routed through the tree once (default), or the bootstrap
// multiset the tree was grown on.
enum class NodeStatSource { routed_rows, in_bag };

struct CooccurrenceOptions {
  NormalizationMode mode = NormalizationMode::jacobson_range;
  NodeStatSource node_stats = NodeStatSource::routed_rows;
  // p(t) denominator: the per-tree sample size by default, the full reference
  // sample size when set.
  bool p_uses_global_n = false;
  int threads = 1;
};

// Theoretical maximum of the MSE from the response range: (max - min)^2 / 9.
inline double mse_max(std::span<const double> in_bag_y) {
  if (in_bag_y.empty()) return 0.0;
  double lo = in_bag_y[0], hi = in_bag_y[0];
  for (double v : in_bag_y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return (hi - lo) * (hi - lo) / 9.0;
}

inline double mse_max_from_range(double y_min, double y_max) {
  return (y_max - y_min) * (y_max - y_min) / 9.0;
}

// Normalized node MSE. Zero over zero counts as a perfect node; a positive
// MSE over a zero denominator is infinitely poor.
inline double nmse(double mse_node, double mse_max_v, double p_t,
                   NormalizationMode mode, double node_mean = 0.0) {
  const double denom = mode == NormalizationMode::jacobson_range
                           ? mse_max_v * p_t
                           : std::abs(node_mean);
  if (denom == 0.0)
    return mse_node == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return mse_node / denom;
}

// Local goodness of fit: clamp of 1 - NMSE to [0,1].
inline double local_fit_w(double nmse_v) { return std::max(0.0, 1.0 - nmse_v); }

struct NodeWeight {
  double w = 0.0;
  double nmse = 0.0;
  double mse = 0.0;
  double p_t = 0.0;
  int n_t = 0;
};

struct NodeWeightTable {
  // weight[b][node index]; only leaf entries are meaningful.
  std::vector<std::vector<NodeWeight>> per_tree;
  std::vector<std::string> warnings;
};

// Per-leaf local fit weights for every tree in the forest.
inline NodeWeightTable node_weights(const Forest& forest, const DataTable& data,
                                    const CooccurrenceOptions& opts = {}) {
  NodeWeightTable table;
  table.per_tree.resize(forest.trees.size());
  const std::size_t n_train = forest.train_rows.size();

  for (std::size_t b = 0; b < forest.trees.size(); ++b) {
    const RegressionTree& tree = forest.trees[b];
    auto& weights = table.per_tree[b];
    weights.resize(tree.nodes.size());

    const double mmax = mse_max_from_range(tree.y_min, tree.y_max);
    if (mmax == 0.0) {
      // Constant in-bag response: the tree carries no fit information.
      table.warnings.push_back("tree " + std::to_string(b) +
                               ": constant in-bag response, all node weights 0");
      continue;
    }

    const bool routed = opts.node_stats == NodeStatSource::routed_rows;
    std::vector<double> leaf_sum, leaf_sumsq;
    std::vector<int> leaf_n;
    if (routed) {
      leaf_sum.assign(tree.nodes.size(), 0.0);
      leaf_sumsq.assign(tree.nodes.size(), 0.0);
      leaf_n.assign(tree.nodes.size(), 0);
      for (std::size_t i = 0; i < n_train; ++i) {
        const int row = forest.train_rows[i];
        const int leaf = route_to_terminal(tree, data, row);
        const double yv = data.response[static_cast<std::size_t>(row)];
        leaf_sum[static_cast<std::size_t>(leaf)] += yv;
        leaf_sumsq[static_cast<std::size_t>(leaf)] += yv * yv;
        leaf_n[static_cast<std::size_t>(leaf)] += 1;
      }
    }

    double sample_size = 0;  // p(t) denominator
    if (opts.p_uses_global_n) {
      sample_size = static_cast<double>(data.n_rows());
    } else if (routed) {
      sample_size = static_cast<double>(n_train);
    } else {
      for (int c : tree.in_bag_count) sample_size += c;
    }

    for (std::size_t t = 0; t < tree.nodes.size(); ++t) {
      if (!tree.nodes[t].is_leaf()) continue;
      NodeWeight& nw = weights[t];
      double mean;
      if (routed) {
        nw.n_t = leaf_n[t];
        if (nw.n_t == 0) continue;  // leaf unreachable by training rows
        mean = leaf_sum[t] / nw.n_t;
        nw.mse = std::max(0.0, leaf_sumsq[t] / nw.n_t - mean * mean);
      } else {
        nw.n_t = tree.nodes[t].n_node;
        mean = tree.nodes[t].prediction;
        nw.mse = tree.nodes[t].mse_node;
      }
      nw.p_t = static_cast<double>(nw.n_t) / sample_size;
      nw.nmse = nmse(nw.mse, mmax, nw.p_t, opts.mode, mean);
      nw.w = local_fit_w(nw.nmse);
    }
  }
  return table;
}

struct CooccurrenceResult {
  PairMatrix o;
  std::vector<std::string> warnings;
};

// Weighted co-occurrence matrix: O_ij sums the shared-leaf weights over trees
// and normalizes by the larger of the two rows' total leaf weights. Every row
// in `rows` is routed through every tree, in-bag or not.
inline CooccurrenceResult cooccurrence_matrix(const Forest& forest,
                                              const DataTable& data,
                                              std::span<const int> rows,
                                              const NodeWeightTable& weights,
                                              const CooccurrenceOptions& opts = {}) {
  const std::size_t n = rows.size();
  const std::size_t n_trees = forest.trees.size();
  CooccurrenceResult result{PairMatrix(n, 0.0), {}};
  result.warnings = weights.warnings;
  if (n == 0) return result;

  // leaf_of[b*n + i]: terminal node of rows[i] in tree b.
  std::vector<int> leaf_of(n_trees * n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    for (std::size_t b = 0; b < n_trees; ++b)
      leaf_of[b * n + i] = route_to_terminal(forest.trees[b], data, rows[i]);
  });

  // Total leaf weight per row, summed in tree order.
  std::vector<double> row_weight(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t b = 0; b < n_trees; ++b)
      s += weights.per_tree[b][static_cast<std::size_t>(leaf_of[b * n + i])].w;
    row_weight[i] = s;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (row_weight[i] == 0.0)
      result.warnings.push_back(
          "row " + std::to_string(rows[i]) +
          ": zero total leaf weight, co-occurrence entries set to 0");

  PairMatrix& o = result.o;
  parallel_for(n, opts.threads, [&](std::size_t i) {
    o.ref(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double num = 0.0;
      for (std::size_t b = 0; b < n_trees; ++b) {
        const int li = leaf_of[b * n + i];
        if (li != leaf_of[b * n + j]) continue;
        num += weights.per_tree[b][static_cast<std::size_t>(li)].w;
      }
      const double denom = std::max(row_weight[i], row_weight[j]);
      double v = denom > 0.0 ? num / denom : 0.0;
      v = std::clamp(v, 0.0, 1.0);
      o.ref(i, j) = v;
      o.ref(j, i) = v;
    }
  });
  return result;
}

inline CooccurrenceResult cooccurrence_matrix(const Forest& forest,
                                              const DataTable& data,
                                              std::span<const int> rows,
                                              const CooccurrenceOptions& opts = {}) {
  return cooccurrence_matrix(forest, data, rows, node_weights(forest, data, opts),
                             opts);
}

// D = 1 - O entrywise; diagonal 0.
inline PairMatrix dissimilarity(const PairMatrix& o) {
  PairMatrix d(o.n());
  for (std::size_t i = 0; i < o.n(); ++i)
    for (std::size_t j = 0; j < o.n(); ++j)
      d.ref(i, j) = i == j ? 0.0 : 1.0 - o.at(i, j);
  return d;
}

}  // namespace e2t
