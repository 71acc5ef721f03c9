#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "e2t/common.hpp"

namespace e2t {

struct MannWhitneyResult {
  double u = 0.0;           // U statistic of the first sample, midrank ties
  double p_two_sided = 1.0;
  bool exact = false;       // true when the exact null distribution was used
};

namespace detail {

// Midranks over the pooled sample, plus the tie term sum(t^3 - t).
struct PooledRanks {
  std::vector<double> ranks;       // aligned with the pooled value order
  std::vector<int> group_count;    // tie-group sizes over distinct values
  std::vector<int> group_rank2;    // doubled midrank per tie group (integer)
  double tie_term = 0.0;
};

inline PooledRanks midranks(std::vector<double>& pooled) {
  std::sort(pooled.begin(), pooled.end());
  PooledRanks pr;
  pr.ranks.resize(pooled.size());
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) pr.ranks[k] = mid;
    pr.group_count.push_back(static_cast<int>(j - i));
    pr.group_rank2.push_back(static_cast<int>(i + 1 + j));  // 2 * midrank
    pr.tie_term += t * t * t - t;
    i = j;
  }
  return pr;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Exact two-sided p-value under the permutation null, ties included. Counts
// the ways to pick the smaller sample out of the tie groups, tracking the
// doubled rank sum; all counts are integers below 2^53, so doubles are exact.
inline double exact_two_sided_p(const PooledRanks& pr, int n_small, double u_small,
                                double n1, double n2) {
  const double mu2 = n1 * n2;  // 2 * mean of U
  int max_sum2 = 0;
  for (std::size_t g = 0; g < pr.group_count.size(); ++g)
    max_sum2 = std::max(max_sum2, pr.group_rank2[g]);
  max_sum2 *= n_small;

  std::vector<std::vector<double>> dp(
      static_cast<std::size_t>(n_small) + 1,
      std::vector<double>(static_cast<std::size_t>(max_sum2) + 1, 0.0));
  dp[0][0] = 1.0;

  std::vector<std::vector<double>> choose(pr.group_count.size());
  for (std::size_t g = 0; g < pr.group_count.size(); ++g) {
    const int t = pr.group_count[g];
    auto& row = choose[g];
    row.assign(static_cast<std::size_t>(std::min(t, n_small)) + 1, 0.0);
    row[0] = 1.0;
    for (int k = 1; k < static_cast<int>(row.size()); ++k)
      row[k] = row[k - 1] * static_cast<double>(t - k + 1) / static_cast<double>(k);
  }

  for (std::size_t g = 0; g < pr.group_count.size(); ++g) {
    const int r2 = pr.group_rank2[g];
    const int tmax = std::min(pr.group_count[g], n_small);
    for (int j = n_small; j >= 0; --j) {
      for (int s = max_sum2; s >= 0; --s) {
        const double ways = dp[j][s];
        if (ways == 0.0) continue;
        for (int k = 1; k <= tmax && j + k <= n_small; ++k) {
          const int s2 = s + k * r2;
          if (s2 > max_sum2) break;
          dp[j + k][s2] += ways * choose[g][static_cast<std::size_t>(k)];
        }
      }
    }
  }

  // 2*U' = rank2sum - n_small*(n_small+1); tail by |2U' - 2mu| >= |2U - 2mu|.
  const double obs_dist = std::abs(2.0 * u_small - mu2);
  double tail = 0.0, total = 0.0;
  const double base = static_cast<double>(n_small) * (n_small + 1.0);
  for (int s = 0; s <= max_sum2; ++s) {
    const double ways = dp[static_cast<std::size_t>(n_small)][s];
    if (ways == 0.0) continue;
    total += ways;
    const double u2 = static_cast<double>(s) - base;  // 2 * U'
    if (std::abs(u2 - mu2) >= obs_dist - 1e-9) tail += ways;
  }
  return total > 0.0 ? tail / total : 1.0;
}

}  // namespace detail

// Two-sided Mann-Whitney U test. Exact tie-aware null distribution when the
// smaller sample has fewer than 8 values; otherwise the normal approximation
// with tie-corrected variance and continuity correction.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a,
                                        std::span<const double> b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 == 0 || n2 == 0)
    throw validation_error("mann_whitney_u requires nonempty samples");

  std::vector<double> pooled;
  pooled.reserve(n1 + n2);
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto pr = detail::midranks(pooled);

  // Rank sum of the first sample: count pooled positions its values occupy.
  // With ties, sum midranks of a's values directly.
  double r1 = 0.0;
  {
    std::vector<double> sorted_pool = pooled;  // already sorted by midranks()
    for (double x : a) {
      auto it = std::lower_bound(sorted_pool.begin(), sorted_pool.end(), x);
      r1 += pr.ranks[static_cast<std::size_t>(it - sorted_pool.begin())];
    }
  }

  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
  MannWhitneyResult res;
  res.u = r1 - dn1 * (dn1 + 1.0) / 2.0;

  if (pr.group_count.size() <= 1) {  // every value tied across both samples
    res.p_two_sided = 1.0;
    res.exact = true;
    return res;
  }

  if (std::min(n1, n2) >= 8) {
    const double mu = dn1 * dn2 / 2.0;
    const double n = dn1 + dn2;
    const double var =
        (dn1 * dn2 / 12.0) * ((n + 1.0) - pr.tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
      res.p_two_sided = 1.0;
    } else {
      const double z =
          std::max(0.0, std::abs(res.u - mu) - 0.5) / std::sqrt(var);
      res.p_two_sided = std::min(1.0, 2.0 * detail::normal_sf(z));
    }
    res.exact = false;
    return res;
  }

  const bool first_is_small = n1 <= n2;
  const int n_small = static_cast<int>(std::min(n1, n2));
  const double u_small = first_is_small ? res.u : dn1 * dn2 - res.u;
  res.p_two_sided = detail::exact_two_sided_p(pr, n_small, u_small, dn1, dn2);
  res.exact = true;
  return res;
}

}  // namespace e2t
