#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/dataset.hpp"
#include "e2t/e2tree.hpp"
#include "e2t/matrix.hpp"

namespace e2t {

inline constexpr char kMatrixMagic[8] = {'E', '2', 'T', 'M', 'A', 'T', '0', '1'};

// Binary matrix layout: 8-byte magic, u64 row count, row-major doubles.
inline void write_matrix_bin(const PairMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write matrix file: " + path);
  out.write(kMatrixMagic, sizeof(kMatrixMagic));
  const std::uint64_t n = m.n();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!out) throw io_error("failed writing matrix file: " + path);
}

inline PairMatrix read_matrix_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open matrix file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMatrixMagic, sizeof(magic)) != 0)
    throw validation_error("not a matrix file: " + path);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in) throw validation_error("truncated matrix file: " + path);
  PairMatrix m(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(m.data().data()),
          static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!in) throw validation_error("truncated matrix file: " + path);
  return m;
}

inline void write_matrix_csv(const PairMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write matrix file: " + path);
  for (std::size_t i = 0; i < m.n(); ++i) {
    for (std::size_t j = 0; j < m.n(); ++j) {
      if (j) out << ',';
      out << format_double(m.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw io_error("failed writing matrix file: " + path);
}

namespace detail {

// White -> dark blue ramp over [0,1].
inline std::string heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(255 + v * (8 - 255));
  const int g = static_cast<int>(255 + v * (48 - 255));
  const int b = static_cast<int>(255 + v * (107 - 255));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace detail

// Heatmap of a [0,1] matrix with rows and columns permuted by `order`
// (typically a dendrogram leaf order).
inline void write_heatmap_svg(const PairMatrix& m, std::span<const int> order,
                              const std::string& path) {
  if (order.size() != m.n())
    throw validation_error("heatmap: order length does not match matrix");
  const std::size_t n = m.n();
  const double cell = n > 0 ? std::max(1.0, 640.0 / static_cast<double>(n)) : 1.0;
  const double size = cell * static_cast<double>(n);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write SVG file: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << ' ' << size
      << "\" shape-rendering=\"crispEdges\">\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m.at(static_cast<std::size_t>(order[i]),
                            static_cast<std::size_t>(order[j]));
      out << "<rect x=\"" << format_double(static_cast<double>(j) * cell)
          << "\" y=\"" << format_double(static_cast<double>(i) * cell)
          << "\" width=\"" << format_double(cell) << "\" height=\""
          << format_double(cell) << "\" fill=\"" << detail::heat_color(v)
          << "\"/>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw io_error("failed writing SVG file: " + path);
}

namespace detail {

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

// GraphViz rendering: boxes filled darker for higher predictions, edges
// labeled with the branch predicates.
inline std::string tree_dot(const ExplTree& tree, const DataTable& data) {
  double lo = tree.nodes.front().prediction, hi = lo;
  for (const auto& node : tree.nodes) {
    lo = std::min(lo, node.prediction);
    hi = std::max(hi, node.prediction);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream out;
  out << "digraph e2tree {\n"
      << "  node [shape=box style=filled fontname=\"Helvetica\"];\n"
      << "  edge [fontname=\"Helvetica\" fontsize=10];\n";
  for (int idx : tree.preorder()) {
    const ExplNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    const double shade = (node.prediction - lo) / span;
    out << "  n" << node.t << " [label=\"t=" << node.t << "\\nn=" << node.n_t
        << "\\n" << detail::fixed2(node.prediction) << "\" fillcolor=\""
        << detail::heat_color(shade) << "\""
        << (shade > 0.6 ? " fontcolor=\"white\"" : "") << "];\n";
  }
  for (int idx : tree.preorder()) {
    const ExplNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.terminal) continue;
    out << "  n" << node.t << " -> n" << 2 * node.t << " [label=\""
        << detail::dot_escape(rule_text(node.s_star->rule, data, true)) << "\"];\n";
    out << "  n" << node.t << " -> n" << 2 * node.t + 1 << " [label=\""
        << detail::dot_escape(rule_text(node.s_star->rule, data, false)) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

// Plain-text node table in the published column order.
inline std::string node_table_text(const std::vector<NodeTableRow>& rows) {
  std::vector<std::array<std::string, 7>> cells;
  cells.push_back({"t", "n_t", "Prediction", "W_t", "s*", "Node Type", "Path"});
  for (const auto& r : rows)
    cells.push_back({std::to_string(r.t), std::to_string(r.n_t),
                     detail::fixed2(r.prediction), detail::fixed2(r.w),
                     r.split.empty() ? "-" : r.split,
                     r.terminal ? "Terminal" : "Non-Terminal", r.path});
  std::array<std::size_t, 7> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < 7; ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 7; ++c) {
      out << row[c];
      if (c + 1 < 7) out << std::string(width[c] - row[c].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace e2t
