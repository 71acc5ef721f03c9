#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/cooccurrence.hpp"
#include "e2t/dataset.hpp"
#include "e2t/forest.hpp"
#include "e2t/mann_whitney.hpp"
#include "e2t/matrix.hpp"

namespace e2t {

enum class SplitObjective {
  // Weighted mean within-child pairwise dissimilarity, minimized (default).
  min_within_child,
  // Mean between-child pairwise dissimilarity, maximized. Offered for
  // sensitivity runs; scores are negated so lower is still better.
  max_between_child,
};

struct StopConfig {
  double gamma = 0.05;  // NMSE threshold below which a node is terminal
  double alpha = 0.05;  // Mann-Whitney two-sided significance for pruning
  int min_node = 5;
  int max_depth = 10;
  SplitObjective objective = SplitObjective::min_within_child;
};

struct SplitCandidate {
  SplitRule rule;
  double score = 0.0;  // lower is better
};

enum class StopReason {
  none,          // non-terminal
  too_small,     // n_t < 2 * min_node
  max_depth,
  nmse_le_gamma,
  no_candidates,
  mw_prune,      // children response distributions indistinguishable
  degenerate,    // all within-node dissimilarities are zero
};

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::too_small: return "too_small";
    case StopReason::max_depth: return "max_depth";
    case StopReason::nmse_le_gamma: return "nmse_le_gamma";
    case StopReason::no_candidates: return "no_candidates";
    case StopReason::mw_prune: return "mw_prune";
    case StopReason::degenerate: return "degenerate";
  }
  return "?";
}

struct ExplNode {
  int t = 1;      // heap id: root 1, children 2t and 2t+1
  int depth = 0;
  std::vector<int> pos;  // positions into the tree's row map (and into D)
  int n_t = 0;
  double prediction = 0.0;  // mean response over the node's rows
  double mse = 0.0;
  double nmse = 0.0;
  double w = 0.0;  // max(0, 1 - nmse)
  bool terminal = true;
  StopReason stop = StopReason::none;
  std::optional<SplitCandidate> s_star;         // set on non-terminal nodes
  std::optional<SplitCandidate> attempted_split;  // best split at this node, if any
  std::optional<double> mw_p;                     // Mann-Whitney p at the attempted split
};

struct ExplTree {
  std::vector<ExplNode> nodes;  // breadth-first creation order
  std::vector<int> rows;        // row map: position -> data row id
  StopConfig stop;
  NormalizationMode norm = NormalizationMode::jacobson_range;
  double mse_max_value = 0.0;  // surrogate MSE_max from the training range
  int n_train = 0;

  int index_of(int heap_id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].t == heap_id) return static_cast<int>(i);
    return -1;
  }

  int terminal_count() const {
    int k = 0;
    for (const auto& n : nodes) k += n.terminal ? 1 : 0;
    return k;
  }

  // Depth-first preorder over heap ids (left subtree before right).
  std::vector<int> preorder() const {
    std::vector<int> order;
    std::vector<int> stack{1};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      const int idx = index_of(id);
      if (idx < 0) continue;
      order.push_back(idx);
      if (!nodes[static_cast<std::size_t>(idx)].terminal) {
        stack.push_back(2 * id + 1);
        stack.push_back(2 * id);
      }
    }
    return order;
  }
};

// All candidate splits over the given data rows: numeric features contribute
// midpoints between consecutive distinct values, categorical features all
// proper nonempty binary subsets of the levels present (the last present
// level pinned right to deduplicate), or node-mean-ordered contiguous
// prefixes past 10 levels. Both children are nonempty by construction.
inline std::vector<SplitCandidate> enumerate_splits(const DataTable& data,
                                                    std::span<const int> rows) {
  std::vector<SplitCandidate> out;
  if (rows.size() < 2) return out;
  for (std::size_t f = 0; f < data.n_features(); ++f) {
    const FeatureColumn& col = data.features[f];
    if (col.kind == ColumnKind::numeric) {
      std::vector<double> vals;
      vals.reserve(rows.size());
      for (int r : rows) vals.push_back(col.values[static_cast<std::size_t>(r)]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        SplitCandidate c;
        c.rule.feature = static_cast<int>(f);
        c.rule.is_categorical = false;
        c.rule.threshold = (vals[i] + vals[i + 1]) / 2.0;
        out.push_back(c);
      }
    } else {
      std::vector<int> present;
      {
        std::vector<char> seen(col.levels.size(), 0);
        for (int r : rows) seen[static_cast<std::size_t>(col.codes[static_cast<std::size_t>(r)])] = 1;
        for (std::size_t l = 0; l < col.levels.size(); ++l)
          if (seen[l]) present.push_back(static_cast<int>(l));
      }
      if (present.size() < 2) continue;
      auto push_mask = [&](std::uint64_t mask) {
        SplitCandidate c;
        c.rule.feature = static_cast<int>(f);
        c.rule.is_categorical = true;
        c.rule.left_levels = mask;
        out.push_back(c);
      };
      if (present.size() <= 10) {
        const std::size_t m = present.size() - 1;
        for (std::uint64_t sub = 1; sub < (1ULL << m); ++sub) {
          std::uint64_t mask = 0;
          for (std::size_t b = 0; b < m; ++b)
            if ((sub >> b) & 1ULL) mask |= 1ULL << present[b];
          push_mask(mask);
        }
      } else {
        std::vector<double> lvl_sum(col.levels.size(), 0);
        std::vector<int> lvl_n(col.levels.size(), 0);
        for (int r : rows) {
          const auto code = static_cast<std::size_t>(col.codes[static_cast<std::size_t>(r)]);
          lvl_sum[code] += data.response[static_cast<std::size_t>(r)];
          lvl_n[code] += 1;
        }
        std::vector<int> order = present;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          const double ma = lvl_sum[static_cast<std::size_t>(a)] / lvl_n[static_cast<std::size_t>(a)];
          const double mb = lvl_sum[static_cast<std::size_t>(b)] / lvl_n[static_cast<std::size_t>(b)];
          return ma < mb || (ma == mb && a < b);
        });
        std::uint64_t mask = 0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          mask |= 1ULL << order[i];
          push_mask(mask);
        }
      }
    }
  }
  return out;
}

// Score of one candidate split over the node positions `pos`. D is indexed by
// positions; `rows_map` maps positions to data rows for rule application.
// min_within_child: (n_L * mean within-L + n_R * mean within-R) / (n_L + n_R),
// a singleton child contributing 0. max_between_child: negated cross mean.
inline double evaluate_split(const PairMatrix& d, const DataTable& data,
                             std::span<const int> rows_map,
                             std::span<const int> pos, const SplitRule& rule,
                             SplitObjective objective = SplitObjective::min_within_child) {
  std::vector<int> left, right;
  for (int p : pos) {
    if (rule.routes_left(data, rows_map[static_cast<std::size_t>(p)]))
      left.push_back(p);
    else
      right.push_back(p);
  }
  if (left.empty() || right.empty())
    throw validation_error("evaluate_split: rule leaves a child empty");

  auto within_mean = [&](const std::vector<int>& s) {
    if (s.size() < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j)
        sum += d.at(static_cast<std::size_t>(s[i]), static_cast<std::size_t>(s[j]));
    const double m = static_cast<double>(s.size());
    return sum / (m * (m - 1.0) / 2.0);
  };

  const double nl = static_cast<double>(left.size());
  const double nr = static_cast<double>(right.size());
  if (objective == SplitObjective::min_within_child)
    return (nl * within_mean(left) + nr * within_mean(right)) / (nl + nr);

  double cross = 0.0;
  for (int a : left)
    for (int b : right)
      cross += d.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  return -cross / (nl * nr);
}

// Minimal-score candidate; ties resolve to the earliest enumerated candidate
// (schema feature order, then ascending threshold / subset mask).
inline SplitCandidate best_split(std::vector<SplitCandidate> candidates,
                                 const PairMatrix& d, const DataTable& data,
                                 std::span<const int> rows_map,
                                 std::span<const int> pos,
                                 SplitObjective objective = SplitObjective::min_within_child,
                                 int threads = 1) {
  if (candidates.empty())
    throw validation_error("best_split: empty candidate list");
  parallel_for(candidates.size(), threads, [&](std::size_t c) {
    candidates[c].score =
        evaluate_split(d, data, rows_map, pos, candidates[c].rule, objective);
  });
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c)
    if (candidates[c].score < candidates[best].score) best = c;
  return candidates[best];
}

namespace detail {

inline bool all_pairs_zero(const PairMatrix& d, std::span<const int> pos) {
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      if (d.at(static_cast<std::size_t>(pos[i]), static_cast<std::size_t>(pos[j])) != 0.0)
        return false;
  return true;
}

}  // namespace detail

// Grows the surrogate tree on the dissimilarity matrix D (indexed by the
// positions of `rows`). Breadth-first, heap-numbered nodes; a node becomes
// terminal on the size/depth guards, when no candidate split exists, when its
// NMSE is at most gamma, or when the Mann-Whitney test cannot distinguish the
// children's response distributions at the attempted split.
inline ExplTree grow(const PairMatrix& d, const DataTable& data,
                     std::span<const int> rows, const StopConfig& stop,
                     NormalizationMode norm = NormalizationMode::jacobson_range,
                     int threads = 1) {
  if (d.n() != rows.size())
    throw validation_error("grow: dissimilarity matrix and row list disagree");
  if (rows.empty()) throw validation_error("grow: empty row list");
  if (!(stop.gamma > 0.0)) throw validation_error("grow: gamma must be > 0");
  if (!(stop.alpha > 0.0 && stop.alpha < 1.0))
    throw validation_error("grow: alpha must lie in (0,1)");

  ExplTree tree;
  tree.rows.assign(rows.begin(), rows.end());
  tree.stop = stop;
  tree.norm = norm;
  tree.n_train = static_cast<int>(rows.size());

  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    y[i] = data.response[static_cast<std::size_t>(rows[i])];
  double y_lo = y[0], y_hi = y[0];
  for (double v : y) {
    y_lo = std::min(y_lo, v);
    y_hi = std::max(y_hi, v);
  }
  tree.mse_max_value = mse_max_from_range(y_lo, y_hi);

  struct Pending {
    int t;
    int depth;
    std::vector<int> pos;
  };
  std::deque<Pending> queue;
  {
    std::vector<int> all(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) all[i] = static_cast<int>(i);
    queue.push_back({1, 0, std::move(all)});
  }

  while (!queue.empty()) {
    Pending item = std::move(queue.front());
    queue.pop_front();

    ExplNode node;
    node.t = item.t;
    node.depth = item.depth;
    node.n_t = static_cast<int>(item.pos.size());

    double sum = 0.0, sumsq = 0.0;
    for (int p : item.pos) {
      sum += y[static_cast<std::size_t>(p)];
      sumsq += y[static_cast<std::size_t>(p)] * y[static_cast<std::size_t>(p)];
    }
    node.prediction = sum / node.n_t;
    node.mse = std::max(0.0, sumsq / node.n_t - node.prediction * node.prediction);
    const double p_t = static_cast<double>(node.n_t) / tree.n_train;
    node.nmse = nmse(node.mse, tree.mse_max_value, p_t, norm, node.prediction);
    node.w = local_fit_w(node.nmse);

    auto make_terminal = [&](StopReason why) {
      node.terminal = true;
      node.stop = why;
      node.pos = std::move(item.pos);
      tree.nodes.push_back(std::move(node));
    };

    if (node.n_t < 2 * stop.min_node) {
      make_terminal(StopReason::too_small);
      continue;
    }
    if (node.depth >= stop.max_depth) {
      make_terminal(StopReason::max_depth);
      continue;
    }
    if (detail::all_pairs_zero(d, item.pos)) {
      make_terminal(StopReason::degenerate);
      continue;
    }

    std::vector<int> node_rows(item.pos.size());
    for (std::size_t i = 0; i < item.pos.size(); ++i)
      node_rows[i] = rows[static_cast<std::size_t>(item.pos[i])];
    auto candidates = enumerate_splits(data, node_rows);
    if (candidates.empty()) {
      make_terminal(StopReason::no_candidates);
      continue;
    }

    const SplitCandidate chosen =
        best_split(std::move(candidates), d, data, rows, item.pos,
                   stop.objective, threads);
    node.attempted_split = chosen;

    if (node.nmse <= stop.gamma) {
      make_terminal(StopReason::nmse_le_gamma);
      continue;
    }

    std::vector<int> left_pos, right_pos;
    for (int p : item.pos) {
      if (chosen.rule.routes_left(data, rows[static_cast<std::size_t>(p)]))
        left_pos.push_back(p);
      else
        right_pos.push_back(p);
    }
    std::vector<double> y_left, y_right;
    y_left.reserve(left_pos.size());
    y_right.reserve(right_pos.size());
    for (int p : left_pos) y_left.push_back(y[static_cast<std::size_t>(p)]);
    for (int p : right_pos) y_right.push_back(y[static_cast<std::size_t>(p)]);
    const auto mw = mann_whitney_u(y_left, y_right);
    node.mw_p = mw.p_two_sided;

    if (mw.p_two_sided >= stop.alpha) {
      make_terminal(StopReason::mw_prune);
      continue;
    }

    node.terminal = false;
    node.stop = StopReason::none;
    node.s_star = chosen;
    node.pos = std::move(item.pos);
    const int t = node.t;
    const int depth = node.depth;
    tree.nodes.push_back(std::move(node));
    queue.push_back({2 * t, depth + 1, std::move(left_pos)});
    queue.push_back({2 * t + 1, depth + 1, std::move(right_pos)});
  }
  return tree;
}

namespace detail {

// Display form of a threshold; full precision lives only in serialized rules.
inline std::string threshold_text(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

// Split rendering, matching the published table style:
//   numeric      "weight ≤ 2074"      (right branch "weight > 2074")
//   categorical  "Species = (setosa, virginica)" or "Species = versicolor"
inline std::string rule_text(const SplitRule& rule, const DataTable& data,
                             bool left_branch) {
  const FeatureColumn& col = data.features[static_cast<std::size_t>(rule.feature)];
  if (!rule.is_categorical)
    return col.name + (left_branch ? " ≤ " : " > ") +
           detail::threshold_text(rule.threshold);
  std::vector<std::string> levels;
  for (std::size_t l = 0; l < col.levels.size(); ++l) {
    const bool in_left = (rule.left_levels >> l) & 1ULL;
    if (in_left == left_branch) levels.push_back(col.levels[l]);
  }
  std::string txt = col.name + " = ";
  if (levels.size() == 1) return txt + levels[0];
  txt += "(";
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i) txt += ", ";
    txt += levels[i];
  }
  return txt + ")";
}

struct NodeTableRow {
  int t = 0;
  int n_t = 0;
  double prediction = 0.0;
  double w = 0.0;
  std::string split;      // empty on terminal nodes
  bool terminal = true;
  std::string stop;       // satisfied stopping rule, empty on non-terminals
  std::string path;       // predicates joined with " & ", empty at the root
};

// One row per node in depth-first preorder: t, n_t, prediction, W, s*, node
// type, path.
inline std::vector<NodeTableRow> node_table(const ExplTree& tree,
                                            const DataTable& data) {
  std::vector<NodeTableRow> out;
  for (int idx : tree.preorder()) {
    const ExplNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    NodeTableRow row;
    row.t = node.t;
    row.n_t = node.n_t;
    row.prediction = node.prediction;
    row.w = node.w;
    row.terminal = node.terminal;
    if (node.terminal) row.stop = stop_reason_name(node.stop);
    if (node.s_star) row.split = rule_text(node.s_star->rule, data, true);

    // Reconstruct the path from the heap-id chain root -> node.
    std::vector<int> chain;
    for (int id = node.t; id > 1; id /= 2) chain.push_back(id);
    std::reverse(chain.begin(), chain.end());
    int parent_id = 1;
    for (int id : chain) {
      const int parent_idx = tree.index_of(parent_id);
      const ExplNode& parent = tree.nodes[static_cast<std::size_t>(parent_idx)];
      E2T_INVARIANT(parent.s_star.has_value(), "node_table: internal node lacks split");
      if (!row.path.empty()) row.path += " & ";
      row.path += rule_text(parent.s_star->rule, data, id % 2 == 0);
      parent_id = id;
    }
    out.push_back(std::move(row));
  }
  return out;
}

// Surrogate co-occurrence: Ohat_ij is the local fit w of the deepest node
// containing both rows (their heap-id lowest common ancestor), 1 on the
// diagonal.
inline PairMatrix reconstruct_ohat(const ExplTree& tree) {
  const std::size_t n = tree.rows.size();
  PairMatrix ohat(n);

  std::vector<int> terminal_of(n, -1);
  int max_id = 1;
  for (const auto& node : tree.nodes) max_id = std::max(max_id, node.t);
  std::vector<double> w_of(static_cast<std::size_t>(max_id) + 1, 0.0);
  for (const auto& node : tree.nodes) {
    w_of[static_cast<std::size_t>(node.t)] = node.w;
    if (!node.terminal) continue;
    for (int p : node.pos) terminal_of[static_cast<std::size_t>(p)] = node.t;
  }
  for (std::size_t i = 0; i < n; ++i)
    E2T_INVARIANT(terminal_of[i] >= 0, "reconstruct_ohat: uncovered row");

  for (std::size_t i = 0; i < n; ++i) {
    ohat.ref(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      int a = terminal_of[i], b = terminal_of[j];
      while (a != b) {
        if (a > b) a /= 2;
        else b /= 2;
      }
      ohat.set(i, j, w_of[static_cast<std::size_t>(a)]);
    }
  }
  return ohat;
}

}  // namespace e2t
