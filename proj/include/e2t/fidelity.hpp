#pragma once

#include <cmath>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/hclust.hpp"
#include "e2t/matrix.hpp"

namespace e2t {

// Fowlkes-Mallows index over unordered row pairs: TP/sqrt((TP+FP)(TP+FN)),
// computed from the contingency table; 0/0 counts as 0.
inline double fmi(const ClusterLabels& a, const ClusterLabels& b) {
  if (a.labels.size() != b.labels.size())
    throw validation_error("fmi: labelings differ in length");
  const std::size_t n = a.labels.size();
  std::vector<std::vector<long long>> table(
      static_cast<std::size_t>(a.k) + 1,
      std::vector<long long>(static_cast<std::size_t>(b.k) + 1, 0));
  std::vector<long long> row_sum(static_cast<std::size_t>(a.k) + 1, 0);
  std::vector<long long> col_sum(static_cast<std::size_t>(b.k) + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int la = a.labels[i], lb = b.labels[i];
    if (la < 1 || la > a.k || lb < 1 || lb > b.k)
      throw validation_error("fmi: label outside 1..k");
    table[static_cast<std::size_t>(la)][static_cast<std::size_t>(lb)]++;
    row_sum[static_cast<std::size_t>(la)]++;
    col_sum[static_cast<std::size_t>(lb)]++;
  }
  auto pairs2 = [](long long m) { return m * (m - 1) / 2; };
  long long tp = 0, both_a = 0, both_b = 0;
  for (int i = 1; i <= a.k; ++i)
    for (int j = 1; j <= b.k; ++j)
      tp += pairs2(table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  for (int i = 1; i <= a.k; ++i) both_a += pairs2(row_sum[static_cast<std::size_t>(i)]);
  for (int j = 1; j <= b.k; ++j) both_b += pairs2(col_sum[static_cast<std::size_t>(j)]);
  if (both_a == 0 || both_b == 0) return 0.0;
  return static_cast<double>(tp) /
         std::sqrt(static_cast<double>(both_a) * static_cast<double>(both_b));
}

struct FidelityReport {
  double fmi = 0.0;
  int k = 0;
  ClusterLabels labels_o;
  ClusterLabels labels_ohat;
};

// Clusters 1-O and 1-Ohat with complete linkage at k clusters and scores
// their agreement.
inline FidelityReport fidelity_report(const PairMatrix& o, const PairMatrix& ohat,
                                      int k) {
  if (o.n() != ohat.n())
    throw validation_error("fidelity_report: matrix dimensions differ");
  auto to_dissimilarity = [](const PairMatrix& m) {
    PairMatrix d(m.n());
    for (std::size_t i = 0; i < m.n(); ++i)
      for (std::size_t j = 0; j < m.n(); ++j)
        d.ref(i, j) = i == j ? 0.0 : 1.0 - m.at(i, j);
    return d;
  };
  FidelityReport report;
  report.k = k;
  report.labels_o = hclust_complete(to_dissimilarity(o), k).labels;
  report.labels_ohat = hclust_complete(to_dissimilarity(ohat), k).labels;
  report.fmi = fmi(report.labels_o, report.labels_ohat);
  return report;
}

}  // namespace e2t
