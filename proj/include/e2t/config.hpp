#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "e2t/common.hpp"
#include "e2t/cooccurrence.hpp"
#include "e2t/dataset.hpp"
#include "e2t/e2tree.hpp"
#include "e2t/forest.hpp"

namespace e2t {

// Full pipeline configuration. Populated from a sectioned key=value file,
// then overridden by command-line flags (CLI > file > defaults).
struct RunConfig {
  // [dataset]
  std::string dataset_path;
  std::string response;
  std::vector<std::string> categorical;
  double fraction = 0.70;
  std::uint64_t split_seed = 1;
  int train_size = -1;  // -1: round-half-up of fraction * n

  // [forest]
  ForestConfig forest;

  // [cooccurrence]
  NormalizationMode normalization = NormalizationMode::jacobson_range;
  NodeStatSource node_stats = NodeStatSource::routed_rows;
  bool p_uses_global_n = false;

  // [e2tree]
  StopConfig stop;

  // [fidelity]
  int k = 0;  // 0: number of surrogate terminal nodes

  // [run]
  std::string out_dir = "out";
  int threads = 1;

  ColumnSchema schema() const { return ColumnSchema{categorical}; }
  CooccurrenceOptions cooccurrence_options() const {
    return CooccurrenceOptions{normalization, node_stats, p_uses_global_n,
                               threads};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw validation_error("config: boolean expected for " + key + ", got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof())
    throw validation_error("config: number expected for " + key + ", got '" + v + "'");
  return out;
}

}  // namespace detail

// Applies one "section.key = value" assignment.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  const std::string v = detail::trim(value);
  if (key == "dataset.path") cfg.dataset_path = v;
  else if (key == "dataset.response") cfg.response = v;
  else if (key == "dataset.categorical") {
    cfg.categorical.clear();
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) cfg.categorical.push_back(item);
    }
  } else if (key == "dataset.fraction") cfg.fraction = detail::parse_num<double>(v, key);
  else if (key == "dataset.seed") cfg.split_seed = detail::parse_num<std::uint64_t>(v, key);
  else if (key == "dataset.train_size") cfg.train_size = detail::parse_num<int>(v, key);
  else if (key == "forest.n_trees") cfg.forest.n_trees = detail::parse_num<int>(v, key);
  else if (key == "forest.mtry") cfg.forest.mtry = detail::parse_num<int>(v, key);
  else if (key == "forest.min_leaf") cfg.forest.min_leaf = detail::parse_num<int>(v, key);
  else if (key == "forest.seed") cfg.forest.seed = detail::parse_num<std::uint64_t>(v, key);
  else if (key == "cooccurrence.normalization") {
    if (v == "jacobson_range") cfg.normalization = NormalizationMode::jacobson_range;
    else if (v == "abs_node_mean") cfg.normalization = NormalizationMode::abs_node_mean;
    else throw validation_error("config: unknown normalization '" + v + "'");
  } else if (key == "cooccurrence.node_stats") {
    if (v == "routed_rows") cfg.node_stats = NodeStatSource::routed_rows;
    else if (v == "in_bag") cfg.node_stats = NodeStatSource::in_bag;
    else throw validation_error("config: unknown node_stats source '" + v + "'");
  } else if (key == "cooccurrence.p_uses_global_n")
    cfg.p_uses_global_n = detail::parse_bool(v, key);
  else if (key == "e2tree.gamma") cfg.stop.gamma = detail::parse_num<double>(v, key);
  else if (key == "e2tree.alpha") cfg.stop.alpha = detail::parse_num<double>(v, key);
  else if (key == "e2tree.min_node") cfg.stop.min_node = detail::parse_num<int>(v, key);
  else if (key == "e2tree.max_depth") cfg.stop.max_depth = detail::parse_num<int>(v, key);
  else if (key == "e2tree.objective") {
    if (v == "min_within_child") cfg.stop.objective = SplitObjective::min_within_child;
    else if (v == "max_between_child") cfg.stop.objective = SplitObjective::max_between_child;
    else throw validation_error("config: unknown objective '" + v + "'");
  } else if (key == "fidelity.k") cfg.k = detail::parse_num<int>(v, key);
  else if (key == "run.out_dir") cfg.out_dir = v;
  else if (key == "run.threads") cfg.threads = detail::parse_num<int>(v, key);
  else throw validation_error("config: unknown key '" + key + "'");
}

// Sectioned key=value file; '#' starts a comment. Relative dataset paths
// resolve against the config file's directory.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw validation_error("config: line " + std::to_string(line_no) +
                             " is not a key=value assignment");
    const std::string key = detail::trim(line.substr(0, eq));
    if (section.empty())
      throw validation_error("config: key '" + key + "' outside any section");
    apply_config_entry(cfg, section + "." + key, line.substr(eq + 1));
  }

  if (!cfg.dataset_path.empty()) {
    std::filesystem::path p(cfg.dataset_path);
    if (p.is_relative())
      cfg.dataset_path =
          (std::filesystem::path(path).parent_path() / p).string();
  }
  return cfg;
}

inline void validate_run_config(const RunConfig& cfg) {
  if (cfg.dataset_path.empty())
    throw validation_error("config: dataset.path is required");
  if (cfg.response.empty())
    throw validation_error("config: dataset.response is required");
  if (!(cfg.fraction > 0.0 && cfg.fraction < 1.0) && cfg.train_size < 0)
    throw validation_error("config: dataset.fraction must lie in (0,1)");
  if (cfg.threads < 1) throw validation_error("config: run.threads must be >= 1");
  if (cfg.k < 0) throw validation_error("config: fidelity.k must be >= 0");
}

}  // namespace e2t
