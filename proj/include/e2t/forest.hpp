#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/dataset.hpp"

namespace e2t {

struct ForestConfig {
  int n_trees = 500;
  int mtry = 0;  // 0: resolved to max(1, floor(p/3)) at fit time
  int min_leaf = 5;
  std::uint64_t seed = 0;
};

struct SplitRule {
  int feature = -1;
  bool is_categorical = false;
  double threshold = 0.0;         // numeric: route left iff value <= threshold
  std::uint64_t left_levels = 0;  // categorical: route left iff level bit set

  bool routes_left(const DataTable& data, int row) const {
    const FeatureColumn& col = data.features[static_cast<std::size_t>(feature)];
    if (!is_categorical)
      return col.values[static_cast<std::size_t>(row)] <= threshold;
    const int code = col.codes[static_cast<std::size_t>(row)];
    // Levels unseen at training time (or beyond the mask) route right.
    if (code < 0 || code >= 64) return false;
    return (left_levels >> code) & 1ULL;
  }
};

struct TreeNode {
  SplitRule split;          // meaningful iff internal
  int left = -1, right = -1;
  double prediction = 0.0;  // in-node mean of in-bag responses
  int n_node = 0;           // in-bag multiplicity count
  double mse_node = 0.0;    // in-node mean squared deviation (population form)

  bool is_leaf() const { return left < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;    // nodes[0] is the root
  std::vector<int> in_bag_count;  // per position in Forest::train_rows
  double y_min = 0.0, y_max = 0.0;  // in-bag response range
};

struct Forest {
  ForestConfig config;  // with mtry resolved
  std::vector<int> train_rows;
  std::vector<RegressionTree> trees;
};

namespace detail {

struct WeightedStats {
  double n = 0, mean = 0, mse = 0;
};

// pos entries index into train_rows; weights are bootstrap multiplicities.
inline WeightedStats weighted_stats(std::span<const int> pos,
                                    std::span<const int> counts,
                                    std::span<const double> y) {
  WeightedStats s;
  double sum = 0, sumsq = 0;
  for (int p : pos) {
    const double w = counts[static_cast<std::size_t>(p)];
    const double v = y[static_cast<std::size_t>(p)];
    s.n += w;
    sum += w * v;
    sumsq += w * v * v;
  }
  s.mean = sum / s.n;
  s.mse = std::max(0.0, sumsq / s.n - s.mean * s.mean);
  return s;
}

struct GrowContext {
  const DataTable& data;
  std::span<const int> train_rows;
  std::span<const int> counts;  // bootstrap multiplicity per train position
  std::span<const double> y;    // response per train position
  int mtry;
  int min_leaf;
  std::mt19937_64 rng;
  std::vector<TreeNode>* nodes;
};

struct BestSplit {
  double gain = -1.0;
  SplitRule rule;
};

inline void consider_numeric(GrowContext& ctx, int feature,
                             std::span<const int> pos, double parent_sse,
                             double total_n, double total_sum, BestSplit& best) {
  const FeatureColumn& col = ctx.data.features[static_cast<std::size_t>(feature)];
  std::vector<std::pair<double, int>> vals;
  vals.reserve(pos.size());
  for (int p : pos)
    vals.emplace_back(col.values[static_cast<std::size_t>(ctx.train_rows[static_cast<std::size_t>(p)])], p);
  std::sort(vals.begin(), vals.end());
  if (vals.front().first == vals.back().first) return;

  double nl = 0, sum_l = 0, sumsq_l = 0;
  double total_sumsq = 0;
  for (auto& [v, p] : vals) {
    const double w = ctx.counts[static_cast<std::size_t>(p)];
    const double yv = ctx.y[static_cast<std::size_t>(p)];
    total_sumsq += w * yv * yv;
  }

  for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
    const auto [v, p] = vals[i];
    const double w = ctx.counts[static_cast<std::size_t>(p)];
    const double yv = ctx.y[static_cast<std::size_t>(p)];
    nl += w;
    sum_l += w * yv;
    sumsq_l += w * yv * yv;
    if (vals[i + 1].first == v) continue;  // not a boundary between distinct values
    if (nl < ctx.min_leaf || total_n - nl < ctx.min_leaf) continue;
    const double nr = total_n - nl;
    const double sum_r = total_sum - sum_l;
    const double sse_l = sumsq_l - sum_l * sum_l / nl;
    const double sse_r = (total_sumsq - sumsq_l) - sum_r * sum_r / nr;
    const double gain = parent_sse - std::max(0.0, sse_l) - std::max(0.0, sse_r);
    if (gain > best.gain) {
      best.gain = gain;
      best.rule.feature = feature;
      best.rule.is_categorical = false;
      best.rule.threshold = (v + vals[i + 1].first) / 2.0;
      best.rule.left_levels = 0;
    }
  }
}

inline void consider_categorical(GrowContext& ctx, int feature,
                                 std::span<const int> pos, double parent_sse,
                                 double total_n, double total_sum,
                                 BestSplit& best) {
  const FeatureColumn& col = ctx.data.features[static_cast<std::size_t>(feature)];
  const std::size_t n_levels = col.levels.size();
  std::vector<double> lvl_n(n_levels, 0), lvl_sum(n_levels, 0), lvl_sumsq(n_levels, 0);
  for (int p : pos) {
    const int code = col.codes[static_cast<std::size_t>(ctx.train_rows[static_cast<std::size_t>(p)])];
    const double w = ctx.counts[static_cast<std::size_t>(p)];
    const double yv = ctx.y[static_cast<std::size_t>(p)];
    lvl_n[static_cast<std::size_t>(code)] += w;
    lvl_sum[static_cast<std::size_t>(code)] += w * yv;
    lvl_sumsq[static_cast<std::size_t>(code)] += w * yv * yv;
  }
  std::vector<int> present;
  for (std::size_t l = 0; l < n_levels; ++l)
    if (lvl_n[l] > 0) present.push_back(static_cast<int>(l));
  if (present.size() < 2) return;

  double total_sumsq = 0;
  for (std::size_t l = 0; l < n_levels; ++l) total_sumsq += lvl_sumsq[l];

  auto eval_mask = [&](std::uint64_t mask) {
    double nl = 0, sum_l = 0, sumsq_l = 0;
    for (int l : present)
      if ((mask >> l) & 1ULL) {
        nl += lvl_n[static_cast<std::size_t>(l)];
        sum_l += lvl_sum[static_cast<std::size_t>(l)];
        sumsq_l += lvl_sumsq[static_cast<std::size_t>(l)];
      }
    if (nl < ctx.min_leaf || total_n - nl < ctx.min_leaf) return;
    const double nr = total_n - nl;
    const double sum_r = total_sum - sum_l;
    const double sse_l = sumsq_l - sum_l * sum_l / nl;
    const double sse_r = (total_sumsq - sumsq_l) - sum_r * sum_r / nr;
    const double gain = parent_sse - std::max(0.0, sse_l) - std::max(0.0, sse_r);
    if (gain > best.gain) {
      best.gain = gain;
      best.rule.feature = feature;
      best.rule.is_categorical = true;
      best.rule.threshold = 0.0;
      best.rule.left_levels = mask;
    }
  };

  if (present.size() <= 10) {
    // All proper nonempty subsets, deduplicated by pinning the last present
    // level to the right side.
    const std::size_t m = present.size() - 1;
    for (std::uint64_t sub = 1; sub < (1ULL << m); ++sub) {
      std::uint64_t mask = 0;
      for (std::size_t b = 0; b < m; ++b)
        if ((sub >> b) & 1ULL) mask |= 1ULL << present[b];
      eval_mask(mask);
    }
  } else {
    // Order levels by in-node mean response, scan contiguous prefixes.
    std::vector<int> order = present;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double ma = lvl_sum[static_cast<std::size_t>(a)] / lvl_n[static_cast<std::size_t>(a)];
      const double mb = lvl_sum[static_cast<std::size_t>(b)] / lvl_n[static_cast<std::size_t>(b)];
      return ma < mb || (ma == mb && a < b);
    });
    std::uint64_t mask = 0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      mask |= 1ULL << order[i];
      eval_mask(mask);
    }
  }
}

inline int grow_node(GrowContext& ctx, std::vector<int>& pos) {
  auto stats = weighted_stats(pos, ctx.counts, ctx.y);
  const int node_index = static_cast<int>(ctx.nodes->size());
  TreeNode node;
  node.prediction = stats.mean;
  node.n_node = static_cast<int>(std::llround(stats.n));
  node.mse_node = stats.mse;
  ctx.nodes->push_back(node);

  if (stats.n < 2.0 * ctx.min_leaf) return node_index;
  double y_lo = ctx.y[static_cast<std::size_t>(pos.front())], y_hi = y_lo;
  for (int p : pos) {
    y_lo = std::min(y_lo, ctx.y[static_cast<std::size_t>(p)]);
    y_hi = std::max(y_hi, ctx.y[static_cast<std::size_t>(p)]);
  }
  if (y_lo == y_hi) return node_index;  // pure node

  const int p_total = static_cast<int>(ctx.data.n_features());
  std::vector<int> features(static_cast<std::size_t>(p_total));
  std::iota(features.begin(), features.end(), 0);
  // Partial Fisher-Yates: first mtry entries form the candidate set.
  for (int i = 0; i < ctx.mtry; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(bounded(ctx.rng, static_cast<std::uint64_t>(p_total - i)));
    std::swap(features[static_cast<std::size_t>(i)], features[j]);
  }
  features.resize(static_cast<std::size_t>(ctx.mtry));
  std::sort(features.begin(), features.end());

  const double parent_sse = stats.mse * stats.n;
  const double total_sum = stats.mean * stats.n;
  BestSplit best;
  for (int f : features) {
    if (ctx.data.features[static_cast<std::size_t>(f)].kind == ColumnKind::numeric)
      consider_numeric(ctx, f, pos, parent_sse, stats.n, total_sum, best);
    else
      consider_categorical(ctx, f, pos, parent_sse, stats.n, total_sum, best);
  }
  if (best.gain <= 0.0) return node_index;

  std::vector<int> left_pos, right_pos;
  for (int p : pos) {
    if (best.rule.routes_left(ctx.data, ctx.train_rows[static_cast<std::size_t>(p)]))
      left_pos.push_back(p);
    else
      right_pos.push_back(p);
  }
  if (left_pos.empty() || right_pos.empty()) return node_index;

  pos.clear();
  pos.shrink_to_fit();
  const int left_index = grow_node(ctx, left_pos);
  const int right_index = grow_node(ctx, right_pos);
  TreeNode& self = (*ctx.nodes)[static_cast<std::size_t>(node_index)];
  self.split = best.rule;
  self.left = left_index;
  self.right = right_index;
  return node_index;
}

}  // namespace detail

// Fits B bootstrap CART regression trees with per-node feature subsampling.
// Deterministic for a fixed seed regardless of thread count: each tree's
// randomness derives from (seed, tree index) only.
inline Forest fit_forest(const DataTable& data, std::span<const int> train,
                         ForestConfig config, int threads = 1) {
  if (train.empty()) throw validation_error("empty training index list");
  if (config.n_trees < 1) throw validation_error("n_trees must be >= 1");
  if (config.min_leaf < 1) throw validation_error("min_leaf must be >= 1");
  const int p = static_cast<int>(data.n_features());
  if (config.mtry == 0) config.mtry = std::max(1, p / 3);
  if (config.mtry < 1 || config.mtry > p)
    throw validation_error("mtry must lie in [1, number of features]");

  std::vector<double> y(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    y[i] = data.response[static_cast<std::size_t>(train[i])];
  if (std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end())
    throw validation_error("constant response in training set: nothing to fit");

  Forest forest;
  forest.config = config;
  forest.train_rows.assign(train.begin(), train.end());
  forest.trees.resize(static_cast<std::size_t>(config.n_trees));

  const std::size_t n = train.size();
  parallel_for(static_cast<std::size_t>(config.n_trees), threads, [&](std::size_t b) {
    RegressionTree tree;
    std::mt19937_64 rng(mix_seed(config.seed, b));
    tree.in_bag_count.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k)
      tree.in_bag_count[static_cast<std::size_t>(bounded(rng, n))]++;

    std::vector<int> pos;
    tree.y_min = std::numeric_limits<double>::infinity();
    tree.y_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (tree.in_bag_count[i] > 0) {
        pos.push_back(static_cast<int>(i));
        tree.y_min = std::min(tree.y_min, y[i]);
        tree.y_max = std::max(tree.y_max, y[i]);
      }

    detail::GrowContext ctx{data,        forest.train_rows, tree.in_bag_count,
                            y,           config.mtry,       config.min_leaf,
                            rng,         &tree.nodes};
    detail::grow_node(ctx, pos);
    forest.trees[b] = std::move(tree);
  });
  return forest;
}

// Applies the split rules from the root; returns the index of the leaf
// reached. `unseen_level_count`, when given, tallies right-routed rows whose
// categorical code lies outside the training mask range.
inline int route_to_terminal(const RegressionTree& tree, const DataTable& data,
                             int row, long* unseen_level_count = nullptr) {
  int idx = 0;
  while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (unseen_level_count && node.split.is_categorical) {
      const FeatureColumn& col =
          data.features[static_cast<std::size_t>(node.split.feature)];
      if (col.codes[static_cast<std::size_t>(row)] >=
          static_cast<int>(col.levels.size()))
        ++*unseen_level_count;
    }
    idx = node.split.routes_left(data, row) ? node.left : node.right;
  }
  return idx;
}

inline double predict_row(const RegressionTree& tree, const DataTable& data, int row) {
  return tree.nodes[static_cast<std::size_t>(route_to_terminal(tree, data, row))]
      .prediction;
}

struct OobMetrics {
  double mse_oob = 0.0;
  double pct_var_explained = 0.0;
  int n_rows_skipped = 0;  // training rows that were in-bag in every tree
};

// Out-of-bag error and variance explained, with population variance of the
// training response in the denominator.
inline OobMetrics oob_metrics(const Forest& forest, const DataTable& data) {
  const std::size_t n = forest.train_rows.size();
  std::vector<double> sum(n, 0.0);
  std::vector<int> cnt(n, 0);
  for (const auto& tree : forest.trees) {
    for (std::size_t i = 0; i < n; ++i) {
      if (tree.in_bag_count[i] != 0) continue;
      sum[i] += predict_row(tree, data, forest.train_rows[i]);
      cnt[i] += 1;
    }
  }
  OobMetrics m;
  double sse = 0.0;
  std::size_t covered = 0;
  double y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    y_mean += data.response[static_cast<std::size_t>(forest.train_rows[i])];
  y_mean /= static_cast<double>(n);
  double y_var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double yv = data.response[static_cast<std::size_t>(forest.train_rows[i])];
    y_var += (yv - y_mean) * (yv - y_mean);
  }
  y_var /= static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    if (cnt[i] == 0) {
      m.n_rows_skipped++;
      continue;
    }
    const double pred = sum[i] / cnt[i];
    const double yv = data.response[static_cast<std::size_t>(forest.train_rows[i])];
    sse += (pred - yv) * (pred - yv);
    ++covered;
  }
  m.mse_oob = covered > 0 ? sse / static_cast<double>(covered) : 0.0;
  m.pct_var_explained = y_var > 0 ? 100.0 * (1.0 - m.mse_oob / y_var) : 0.0;
  return m;
}

struct FeatureImportance {
  std::string name;
  double pct_inc_mse = 0.0;      // permutation importance, SE-normalized
  double inc_node_purity = 0.0;  // SSE decrease from splits, per-tree average
};

// OOB permutation importance plus split-gain importance. Permutations are
// seeded per (tree, feature), so results do not depend on the thread count.
inline std::vector<FeatureImportance> importances(const Forest& forest,
                                                  const DataTable& data,
                                                  int threads = 1) {
  const std::size_t n = forest.train_rows.size();
  const std::size_t p = data.n_features();
  const std::size_t n_trees = forest.trees.size();
  std::vector<double> delta(n_trees * p, 0.0);
  std::vector<double> purity(n_trees * p, 0.0);

  parallel_for(n_trees, threads, [&](std::size_t b) {
    const RegressionTree& tree = forest.trees[b];
    std::vector<int> oob;
    for (std::size_t i = 0; i < n; ++i)
      if (tree.in_bag_count[i] == 0) oob.push_back(static_cast<int>(i));
    if (oob.empty()) return;

    double mse0 = 0.0;
    for (int i : oob) {
      const int row = forest.train_rows[static_cast<std::size_t>(i)];
      const double r = predict_row(tree, data, row) -
                       data.response[static_cast<std::size_t>(row)];
      mse0 += r * r;
    }
    mse0 /= static_cast<double>(oob.size());

    for (std::size_t f = 0; f < p; ++f) {
      std::mt19937_64 rng(mix_seed(forest.config.seed ^ 0xa5a5a5a5ULL, b * p + f));
      std::vector<int> perm = oob;
      fisher_yates(perm, rng);
      double mse1 = 0.0;
      for (std::size_t k = 0; k < oob.size(); ++k) {
        const int row = forest.train_rows[static_cast<std::size_t>(oob[k])];
        const int donor = forest.train_rows[static_cast<std::size_t>(perm[k])];
        // Walk the tree reading feature f from the donor row.
        int idx = 0;
        while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
          const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
          const int read_row =
              node.split.feature == static_cast<int>(f) ? donor : row;
          idx = node.split.routes_left(data, read_row) ? node.left : node.right;
        }
        const double r = tree.nodes[static_cast<std::size_t>(idx)].prediction -
                         data.response[static_cast<std::size_t>(row)];
        mse1 += r * r;
      }
      mse1 /= static_cast<double>(oob.size());
      delta[b * p + f] = mse1 - mse0;
    }

    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const TreeNode& l = tree.nodes[static_cast<std::size_t>(node.left)];
      const TreeNode& r = tree.nodes[static_cast<std::size_t>(node.right)];
      const double gain = node.mse_node * node.n_node -
                          (l.mse_node * l.n_node + r.mse_node * r.n_node);
      purity[b * p + static_cast<std::size_t>(node.split.feature)] += gain;
    }
  });

  std::vector<FeatureImportance> out(p);
  const double dB = static_cast<double>(n_trees);
  for (std::size_t f = 0; f < p; ++f) {
    out[f].name = data.features[f].name;
    double mean = 0.0;
    for (std::size_t b = 0; b < n_trees; ++b) mean += delta[b * p + f];
    mean /= dB;
    double sd = 0.0;
    for (std::size_t b = 0; b < n_trees; ++b) {
      const double d = delta[b * p + f] - mean;
      sd += d * d;
    }
    sd = n_trees > 1 ? std::sqrt(sd / (dB - 1.0)) : 0.0;
    const double se = sd / std::sqrt(dB);
    out[f].pct_inc_mse = se > 0.0 ? mean / se : 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < n_trees; ++b) total += purity[b * p + f];
    out[f].inc_node_purity = total / dB;
  }
  return out;
}

}  // namespace e2t
