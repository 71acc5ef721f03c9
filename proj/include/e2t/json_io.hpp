#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2t/common.hpp"
#include "e2t/dataset.hpp"
#include "e2t/e2tree.hpp"
#include "e2t/fidelity.hpp"
#include "e2t/forest.hpp"

namespace e2t {

using json = nlohmann::json;

inline json forest_to_json(const Forest& forest, const DataTable& data) {
  json schema;
  schema["response"] = data.response_name;
  schema["features"] = json::array();
  for (const auto& col : data.features) {
    json f;
    f["name"] = col.name;
    f["kind"] = col.kind == ColumnKind::numeric ? "numeric" : "categorical";
    if (col.kind == ColumnKind::categorical) f["levels"] = col.levels;
    schema["features"].push_back(f);
  }

  json trees = json::array();
  for (const auto& tree : forest.trees) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
      json n;
      n["pred"] = node.prediction;
      n["n"] = node.n_node;
      n["mse"] = node.mse_node;
      if (!node.is_leaf()) {
        n["f"] = node.split.feature;
        if (node.split.is_categorical)
          n["mask"] = node.split.left_levels;
        else
          n["thr"] = node.split.threshold;
        n["l"] = node.left;
        n["r"] = node.right;
      }
      nodes.push_back(n);
    }
    trees.push_back({{"y_min", tree.y_min},
                     {"y_max", tree.y_max},
                     {"in_bag", tree.in_bag_count},
                     {"nodes", nodes}});
  }

  return json{{"format", "e2t.forest"},
              {"version", 1},
              {"config",
               {{"n_trees", forest.config.n_trees},
                {"mtry", forest.config.mtry},
                {"min_leaf", forest.config.min_leaf},
                {"seed", forest.config.seed}}},
              {"schema", schema},
              {"train_rows", forest.train_rows},
              {"trees", trees}};
}

inline Forest forest_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "e2t.forest" ||
      j.value("version", 0) != 1)
    throw validation_error("not a serialized forest document");
  Forest forest;
  const auto& cfg = j.at("config");
  forest.config.n_trees = cfg.at("n_trees").get<int>();
  forest.config.mtry = cfg.at("mtry").get<int>();
  forest.config.min_leaf = cfg.at("min_leaf").get<int>();
  forest.config.seed = cfg.at("seed").get<std::uint64_t>();
  forest.train_rows = j.at("train_rows").get<std::vector<int>>();
  for (const auto& jt : j.at("trees")) {
    RegressionTree tree;
    tree.y_min = jt.at("y_min").get<double>();
    tree.y_max = jt.at("y_max").get<double>();
    tree.in_bag_count = jt.at("in_bag").get<std::vector<int>>();
    if (tree.in_bag_count.size() != forest.train_rows.size())
      throw validation_error("forest document: in-bag counts length mismatch");
    for (const auto& jn : jt.at("nodes")) {
      TreeNode node;
      node.prediction = jn.at("pred").get<double>();
      node.n_node = jn.at("n").get<int>();
      node.mse_node = jn.at("mse").get<double>();
      if (jn.contains("f")) {
        node.split.feature = jn.at("f").get<int>();
        if (jn.contains("mask")) {
          node.split.is_categorical = true;
          node.split.left_levels = jn.at("mask").get<std::uint64_t>();
        } else {
          node.split.threshold = jn.at("thr").get<double>();
        }
        node.left = jn.at("l").get<int>();
        node.right = jn.at("r").get<int>();
      }
      tree.nodes.push_back(node);
    }
    if (tree.nodes.empty())
      throw validation_error("forest document: tree with no nodes");
    forest.trees.push_back(std::move(tree));
  }
  if (forest.trees.empty())
    throw validation_error("forest document: no trees");
  return forest;
}

// A serialized forest may only be applied to the table layout it was fitted
// on: same response, same feature names/kinds/levels.
inline void check_schema_match(const json& forest_doc, const DataTable& data) {
  const auto& schema = forest_doc.at("schema");
  if (schema.at("response").get<std::string>() != data.response_name)
    throw validation_error("forest/dataset schema mismatch: response column");
  const auto& features = schema.at("features");
  if (features.size() != data.n_features())
    throw validation_error("forest/dataset schema mismatch: feature count");
  for (std::size_t i = 0; i < data.n_features(); ++i) {
    const auto& f = features[i];
    const FeatureColumn& col = data.features[i];
    if (f.at("name").get<std::string>() != col.name)
      throw validation_error("forest/dataset schema mismatch: feature name '" +
                             col.name + "'");
    const bool cat = f.at("kind").get<std::string>() == "categorical";
    if (cat != (col.kind == ColumnKind::categorical))
      throw validation_error("forest/dataset schema mismatch: kind of '" +
                             col.name + "'");
    if (cat && f.at("levels").get<std::vector<std::string>>() != col.levels)
      throw validation_error("forest/dataset schema mismatch: levels of '" +
                             col.name + "'");
  }
}

inline json node_table_to_json(const std::vector<NodeTableRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"t", r.t},
                   {"n_t", r.n_t},
                   {"prediction", r.prediction},
                   {"w", r.w},
                   {"split", r.split},
                   {"node_type", r.terminal ? "terminal" : "non-terminal"},
                   {"stop", r.stop},
                   {"path", r.path}});
  }
  return arr;
}

inline json expl_tree_to_json(const ExplTree& tree, const DataTable& data) {
  return json{{"format", "e2t.tree"},
              {"version", 1},
              {"gamma", tree.stop.gamma},
              {"alpha", tree.stop.alpha},
              {"min_node", tree.stop.min_node},
              {"max_depth", tree.stop.max_depth},
              {"n_train", tree.n_train},
              {"mse_max", tree.mse_max_value},
              {"terminal_nodes", tree.terminal_count()},
              {"nodes", node_table_to_json(node_table(tree, data))}};
}

inline json fidelity_to_json(const FidelityReport& report) {
  auto sizes = [](const ClusterLabels& l) {
    std::vector<int> s(static_cast<std::size_t>(l.k), 0);
    for (int v : l.labels) s[static_cast<std::size_t>(v - 1)]++;
    return s;
  };
  return json{{"fmi", report.fmi},
              {"k", report.k},
              {"cluster_sizes_o", sizes(report.labels_o)},
              {"cluster_sizes_ohat", sizes(report.labels_ohat)},
              {"labels_o", report.labels_o.labels},
              {"labels_ohat", report.labels_ohat.labels}};
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw io_error("failed writing file: " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw validation_error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace e2t
