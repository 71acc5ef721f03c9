#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "e2t/common.hpp"

namespace e2t {

enum class ColumnKind { numeric, categorical };

// One typed predictor column. Numeric columns use `values`; categorical
// columns store a level index per row plus the level list in first-appearance
// order.
struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> values;
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const {
    return kind == ColumnKind::numeric ? values.size() : codes.size();
  }
};

struct DataTable {
  std::vector<FeatureColumn> features;
  std::string response_name;
  std::vector<double> response;

  std::size_t n_rows() const { return response.size(); }
  std::size_t n_features() const { return features.size(); }

  int feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return static_cast<int>(i);
    return -1;
  }
};

struct TrainTestSplit {
  std::vector<int> train;
  std::vector<int> test;
  std::uint64_t seed = 0;
  double fraction = 0.0;
};

struct ColumnSchema {
  // Columns named here are categorical; every other column is numeric.
  std::vector<std::string> categorical;

  bool is_categorical(const std::string& name) const {
    return std::find(categorical.begin(), categorical.end(), name) !=
           categorical.end();
  }
};

namespace detail {

// RFC-4180 record reader: quoted fields, escaped quotes, embedded separators
// and line breaks. Returns false at end of input.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  int c;
  while ((c = in.get()) != EOF) {
    saw_any = true;
    char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(ch);
    }
  }
  if (!saw_any) return false;
  out.push_back(std::move(field));
  return true;
}

inline bool is_missing_cell(const std::string& s) {
  return s.empty() || s == "NA" || s == "?";
}

inline std::optional<double> parse_number(const std::string& s) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += "\"\"";
    else q.push_back(c);
  }
  q += "\"";
  return q;
}

}  // namespace detail

// Loads a header-required CSV into typed columns. The response column must be
// numeric; categorical levels are recorded in first-appearance order. Missing
// cells (empty, "NA", "?") are rejected with their location.
inline DataTable load_csv(const std::string& path, const ColumnSchema& schema,
                          const std::string& response) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open dataset file: " + path);

  std::vector<std::string> header;
  if (!detail::read_csv_record(in, header) || header.empty())
    throw validation_error("empty CSV file: " + path);

  for (const auto& name : schema.categorical)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw validation_error("unknown column in schema: " + name);

  int resp_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == response) resp_col = static_cast<int>(i);
  if (resp_col < 0)
    throw validation_error("unknown response column: " + response);
  if (schema.is_categorical(response))
    throw validation_error("response column must be numeric: " + response);
  if (header.size() < 2)
    throw validation_error("no predictors: dataset has only the response column");

  DataTable table;
  table.response_name = response;
  std::vector<int> col_to_feature(header.size(), -1);
  std::vector<std::unordered_map<std::string, int>> level_index(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) == resp_col) continue;
    FeatureColumn col;
    col.name = header[i];
    col.kind = schema.is_categorical(header[i]) ? ColumnKind::categorical
                                                : ColumnKind::numeric;
    col_to_feature[i] = static_cast<int>(table.features.size());
    table.features.push_back(std::move(col));
  }

  std::vector<std::string> record;
  std::size_t line = 1;
  while (detail::read_csv_record(in, record)) {
    ++line;
    if (record.size() == 1 && record[0].empty()) continue;  // trailing newline
    if (record.size() != header.size())
      throw validation_error("row " + std::to_string(line) + " has " +
                             std::to_string(record.size()) + " fields, expected " +
                             std::to_string(header.size()));
    for (std::size_t i = 0; i < record.size(); ++i) {
      const std::string& cell = record[i];
      if (detail::is_missing_cell(cell))
        throw validation_error("missing value at row " + std::to_string(line) +
                               ", column '" + header[i] + "'");
      if (static_cast<int>(i) == resp_col) {
        auto v = detail::parse_number(cell);
        if (!v)
          throw validation_error("unparsable numeric cell '" + cell +
                                 "' at row " + std::to_string(line) +
                                 ", column '" + header[i] + "'");
        table.response.push_back(*v);
        continue;
      }
      FeatureColumn& col = table.features[col_to_feature[i]];
      if (col.kind == ColumnKind::numeric) {
        auto v = detail::parse_number(cell);
        if (!v)
          throw validation_error("unparsable numeric cell '" + cell +
                                 "' at row " + std::to_string(line) +
                                 ", column '" + header[i] + "'");
        col.values.push_back(*v);
      } else {
        auto& idx = level_index[i];
        auto it = idx.find(cell);
        int code;
        if (it == idx.end()) {
          code = static_cast<int>(col.levels.size());
          if (code >= 64)
            throw validation_error("categorical column '" + col.name +
                                   "' exceeds 64 levels");
          idx.emplace(cell, code);
          col.levels.push_back(cell);
        } else {
          code = it->second;
        }
        col.codes.push_back(code);
      }
    }
  }

  if (table.n_rows() < 2)
    throw validation_error("dataset needs at least 2 rows, got " +
                           std::to_string(table.n_rows()));
  return table;
}

inline void write_csv(const DataTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write CSV file: " + path);
  for (const auto& col : table.features) out << detail::csv_quote(col.name) << ',';
  out << detail::csv_quote(table.response_name) << '\n';
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (const auto& col : table.features) {
      if (col.kind == ColumnKind::numeric)
        out << format_double(col.values[r]);
      else
        out << detail::csv_quote(col.levels[col.codes[r]]);
      out << ',';
    }
    out << format_double(table.response[r]) << '\n';
  }
  if (!out) throw io_error("failed writing CSV file: " + path);
}

// Deterministic shuffle split. Train size is round-half-up of fraction*n
// unless `train_size_override` is non-negative.
inline TrainTestSplit split_train_test(const DataTable& data, double fraction,
                                       std::uint64_t seed,
                                       int train_size_override = -1) {
  const std::size_t n = data.n_rows();
  if (!(fraction > 0.0 && fraction < 1.0))
    throw validation_error("split fraction must lie in (0,1)");
  std::size_t n_train;
  if (train_size_override >= 0) {
    if (static_cast<std::size_t>(train_size_override) > n)
      throw validation_error("train size override exceeds row count");
    n_train = static_cast<std::size_t>(train_size_override);
  } else {
    n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  }

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(mix_seed(seed, 0));
  fisher_yates(order, rng);

  TrainTestSplit split;
  split.seed = seed;
  split.fraction = fraction;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.test.assign(order.begin() + n_train, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

struct FeatureSummary {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // numeric columns
  double mean = 0, sd = 0, min = 0, max = 0;
  // categorical columns
  std::vector<std::pair<std::string, int>> level_counts;
};

namespace detail {

inline FeatureSummary summarize_numeric(const std::string& name,
                                        const std::vector<double>& v) {
  FeatureSummary s;
  s.name = name;
  s.kind = ColumnKind::numeric;
  const double n = static_cast<double>(v.size());
  double sum = 0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / n;
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;  // sample sd
  return s;
}

}  // namespace detail

// Per-feature summary statistics; the response is reported last. Categorical
// columns report level counts instead of moments.
inline std::vector<FeatureSummary> summarize(const DataTable& data) {
  std::vector<FeatureSummary> out;
  for (const auto& col : data.features) {
    if (col.kind == ColumnKind::numeric) {
      out.push_back(detail::summarize_numeric(col.name, col.values));
    } else {
      FeatureSummary s;
      s.name = col.name;
      s.kind = ColumnKind::categorical;
      std::vector<int> counts(col.levels.size(), 0);
      for (int c : col.codes) counts[static_cast<std::size_t>(c)]++;
      for (std::size_t l = 0; l < col.levels.size(); ++l)
        s.level_counts.emplace_back(col.levels[l], counts[l]);
      out.push_back(std::move(s));
    }
  }
  out.push_back(detail::summarize_numeric(data.response_name, data.response));
  return out;
}

}  // namespace e2t
