#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "causalps/csv.hpp"

namespace causalps {

enum class ColumnKind { binary, continuous, categorical_expanded };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::binary: return "binary";
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical_expanded: return "categorical-expanded";
  }
  return "?";
}

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
};

// Record of one categorical column's dummy expansion; enough to map the
// indicators back to the original levels.
struct CategoricalExpansion {
  std::string source;
  std::string reference_level;          // dropped level
  std::vector<std::string> levels;      // levels that became indicator columns
};

// Binary treatment/outcome and an n x p numeric confounder matrix.
// Immutable after construction by convention; estimators share it across
// threads without synchronization.
struct Dataset {
  std::vector<int> treatment;
  std::vector<int> outcome;
  Eigen::MatrixXd confounders;
  std::vector<ColumnInfo> columns;
  std::vector<CategoricalExpansion> expansions;

  int n() const { return static_cast<int>(treatment.size()); }
  int p() const { return static_cast<int>(columns.size()); }

  int n_treated() const {
    int c = 0;
    for (int x : treatment) c += x;
    return c;
  }
  int n_control() const { return n() - n_treated(); }
};

struct ColumnSummary {
  std::string name;
  double min = 0.0, max = 0.0, mean = 0.0;
};

struct ValidationReport {
  int n = 0;
  int p = 0;
  int n_treated = 0;
  int events_treated = 0;
  int events_control = 0;
  std::vector<ColumnSummary> column_summaries;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

struct SchemaColumn {
  std::string name;
  std::string kind;  // "binary" | "continuous" | "categorical"
};

struct DataSchema {
  std::string treatment;
  std::string outcome;
  std::vector<SchemaColumn> confounders;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan";
}

inline double parse_numeric_cell(const std::string& raw, std::size_t row,
                                 const std::string& col) {
  const std::string s = trim(raw);
  if (is_missing_token(s)) return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("unparseable cell at row " + std::to_string(row) +
                             ", column '" + col + "': '" + raw + "'");
  }
  if (pos != s.size())
    throw std::runtime_error("unparseable cell at row " + std::to_string(row) +
                             ", column '" + col + "': '" + raw + "'");
  return v;
}

}  // namespace detail

// Loads a header CSV against a column-role schema. Categorical confounders
// are expanded to one indicator per observed level with the most frequent
// level dropped as reference (ties broken lexicographically).
inline Dataset load_dataset(const std::string& path, const DataSchema& schema) {
  if (schema.treatment.empty() || schema.outcome.empty())
    throw std::invalid_argument("schema must name treatment and outcome columns");
  if (schema.confounders.empty())
    throw std::invalid_argument("schema must name at least one confounder");

  const auto rows = read_csv(path);
  if (rows.size() < 2) throw std::runtime_error("CSV has no data rows: " + path);
  const auto& header = rows.front();

  std::map<std::string, std::size_t> col_index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name = detail::trim(header[j]);
    if (!col_index.emplace(name, j).second)
      throw std::runtime_error("duplicate column name in CSV: '" + name + "'");
  }
  {
    std::set<std::string> seen;
    for (const auto& c : schema.confounders)
      if (!seen.insert(c.name).second)
        throw std::runtime_error("duplicate column name in schema: '" + c.name + "'");
  }
  auto require = [&](const std::string& name) -> std::size_t {
    const auto it = col_index.find(name);
    if (it == col_index.end())
      throw std::runtime_error("column '" + name + "' not found in " + path);
    return it->second;
  };

  const std::size_t n = rows.size() - 1;
  Dataset d;
  d.treatment.resize(n);
  d.outcome.resize(n);

  auto read_binary_01 = [&](std::size_t j, const std::string& what,
                            std::vector<int>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = rows[i + 1];
      if (j >= row.size())
        throw std::runtime_error("short row " + std::to_string(i + 1));
      const double v = detail::parse_numeric_cell(row[j], i + 1, what);
      if (v == 0.0) out[i] = 0;
      else if (v == 1.0) out[i] = 1;
      else throw std::runtime_error("non-binary " + what + " value at row " +
                                    std::to_string(i + 1));
    }
  };
  read_binary_01(require(schema.treatment), "treatment", d.treatment);
  read_binary_01(require(schema.outcome), "outcome", d.outcome);

  // first pass: numeric columns directly, categorical columns collect levels
  std::vector<std::vector<double>> numeric_cols;
  for (const auto& sc : schema.confounders) {
    const std::size_t j = require(sc.name);
    if (sc.kind == "categorical") {
      std::vector<std::string> values(n);
      std::map<std::string, int> counts;
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = detail::trim(rows[i + 1].at(j));
        ++counts[values[i]];
      }
      // reference = most frequent level, ties to the lexicographically first
      std::string ref;
      int best = -1;
      for (const auto& [level, c] : counts) {
        if (c > best) {
          ref = level;
          best = c;
        }
      }
      CategoricalExpansion exp;
      exp.source = sc.name;
      exp.reference_level = ref;
      for (const auto& [level, c] : counts) {
        if (level == ref) continue;
        exp.levels.push_back(level);
        std::vector<double> dummy(n);
        for (std::size_t i = 0; i < n; ++i) dummy[i] = values[i] == level ? 1.0 : 0.0;
        numeric_cols.push_back(std::move(dummy));
        d.columns.push_back({sc.name + "=" + level, ColumnKind::categorical_expanded});
      }
      d.expansions.push_back(std::move(exp));
    } else if (sc.kind == "binary" || sc.kind == "continuous") {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i)
        col[i] = detail::parse_numeric_cell(rows[i + 1].at(j), i + 1, sc.name);
      numeric_cols.push_back(std::move(col));
      d.columns.push_back({sc.name, sc.kind == "binary" ? ColumnKind::binary
                                                        : ColumnKind::continuous});
    } else {
      throw std::invalid_argument("unknown confounder kind '" + sc.kind +
                                  "' for column '" + sc.name + "'");
    }
  }

  d.confounders.resize(static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(numeric_cols.size()));
  for (std::size_t j = 0; j < numeric_cols.size(); ++j)
    for (std::size_t i = 0; i < n; ++i)
      d.confounders(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          numeric_cols[j][i];
  return d;
}

inline ValidationReport validate(const Dataset& d) {
  ValidationReport r;
  r.n = d.n();
  r.p = d.p();
  const std::size_t n = d.treatment.size();
  if (d.outcome.size() != n)
    r.violations.push_back("outcome length " + std::to_string(d.outcome.size()) +
                           " != treatment length " + std::to_string(n));
  if (static_cast<std::size_t>(d.confounders.rows()) != n)
    r.violations.push_back("confounder rows " + std::to_string(d.confounders.rows()) +
                           " != n " + std::to_string(n));
  if (d.confounders.cols() != static_cast<Eigen::Index>(d.columns.size()))
    r.violations.push_back("confounder columns do not match column metadata");

  for (std::size_t i = 0; i < n; ++i) {
    if (d.treatment[i] != 0 && d.treatment[i] != 1)
      r.violations.push_back("non-binary treatment at row " + std::to_string(i + 1));
    if (i < d.outcome.size() && d.outcome[i] != 0 && d.outcome[i] != 1)
      r.violations.push_back("non-binary outcome at row " + std::to_string(i + 1));
  }
  r.n_treated = 0;
  for (std::size_t i = 0; i < n && i < d.outcome.size(); ++i) {
    if (d.treatment[i] == 1) {
      ++r.n_treated;
      r.events_treated += d.outcome[i];
    } else {
      r.events_control += d.outcome[i];
    }
  }
  if (n > 0 && r.n_treated == 0) r.violations.push_back("empty treated arm");
  if (n > 0 && r.n_treated == static_cast<int>(n))
    r.violations.push_back("empty control arm");

  for (Eigen::Index j = 0; j < d.confounders.cols(); ++j) {
    ColumnSummary s;
    s.name = j < static_cast<Eigen::Index>(d.columns.size())
                 ? d.columns[static_cast<std::size_t>(j)].name
                 : ("col" + std::to_string(j));
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < d.confounders.rows(); ++i) {
      const double v = d.confounders(i, j);
      if (!std::isfinite(v)) {
        r.violations.push_back("missing value at row " + std::to_string(i + 1) +
                               ", column '" + s.name + "'");
        continue;
      }
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
    }
    s.mean = d.confounders.rows() > 0
                 ? sum / static_cast<double>(d.confounders.rows())
                 : 0.0;
    r.column_summaries.push_back(s);
  }
  return r;
}

struct StandardizeParam {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizedDataset {
  Dataset data;
  std::vector<StandardizeParam> transforms;  // one entry per continuous column
};

// Centers and scales continuous columns to sample mean 0 and sample SD 1
// (n-1 denominator). Binary and indicator columns pass through untouched.
inline StandardizedDataset standardize_continuous(const Dataset& d) {
  StandardizedDataset out;
  out.data = d;
  const Eigen::Index n = d.confounders.rows();
  for (std::size_t j = 0; j < d.columns.size(); ++j) {
    if (d.columns[j].kind != ColumnKind::continuous) continue;
    const auto col = d.confounders.col(static_cast<Eigen::Index>(j));
    const double m = col.mean();
    if (n < 2)
      throw std::invalid_argument("standardize_continuous: need n >= 2");
    const double sd =
        std::sqrt((col.array() - m).square().sum() / static_cast<double>(n - 1));
    if (!(sd > 0.0))
      throw std::runtime_error("zero-variance continuous column: '" +
                               d.columns[j].name + "'");
    out.data.confounders.col(static_cast<Eigen::Index>(j)) =
        (col.array() - m) / sd;
    out.transforms.push_back({d.columns[j].name, m, sd});
  }
  return out;
}

// Retain only the listed confounder columns (estimator-visible subsets).
inline Dataset subset_columns(const Dataset& d, const std::vector<int>& keep) {
  Dataset out;
  out.treatment = d.treatment;
  out.outcome = d.outcome;
  out.confounders.resize(d.confounders.rows(),
                         static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const int src = keep[j];
    if (src < 0 || src >= d.p())
      throw std::out_of_range("subset_columns: index out of range");
    out.confounders.col(static_cast<Eigen::Index>(j)) = d.confounders.col(src);
    out.columns.push_back(d.columns[static_cast<std::size_t>(src)]);
  }
  return out;
}

// [1 | C] with the intercept in the first column.
inline Eigen::MatrixXd design_matrix(const Dataset& d) {
  Eigen::MatrixXd design(d.confounders.rows(), d.confounders.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(d.confounders.cols()) = d.confounders;
  return design;
}

}  // namespace causalps
