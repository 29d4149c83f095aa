#include "msmkit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace msmkit {

int TreatmentSupport::level_index(int t, int code) const {
  const auto& lv = levels.at(t - 1);
  auto it = std::lower_bound(lv.begin(), lv.end(), code);
  if (it == lv.end() || *it != code) {
    throw ContractError("treatment code " + std::to_string(code) +
                        " not in support at time " + std::to_string(t));
  }
  return static_cast<int>(it - lv.begin());
}

bool TreatmentSupport::contains(int t, int code) const {
  const auto& lv = levels.at(t - 1);
  return std::binary_search(lv.begin(), lv.end(), code);
}

void TreatmentSupport::validate() const {
  for (std::size_t t = 0; t < levels.size(); ++t) {
    if (levels[t].empty()) {
      throw ContractError("empty treatment support at time " +
                          std::to_string(t + 1));
    }
    for (std::size_t k = 1; k < levels[t].size(); ++k) {
      if (levels[t][k] <= levels[t][k - 1]) {
        throw ContractError("treatment support must be strictly increasing");
      }
    }
  }
}

void DataSchema::validate() const {
  if (tau < 1) throw SchemaError("schema: tau must be >= 1");
  if (static_cast<int>(treatment_cols.size()) != tau) {
    throw SchemaError("schema: need exactly tau treatment columns");
  }
  if (static_cast<int>(covariate_cols.size()) != tau) {
    throw SchemaError("schema: need covariate column lists for all tau times");
  }
  for (const auto& block : covariate_cols) {
    if (block.empty()) {
      throw SchemaError("schema: each time point needs >= 1 covariate column");
    }
  }
  if (outcome_col.empty()) throw SchemaError("schema: outcome column missing");
  for (const auto& b : baseline_cols) {
    if (std::find(covariate_cols[0].begin(), covariate_cols[0].end(), b) ==
        covariate_cols[0].end()) {
      throw SchemaError("schema: baseline column '" + b +
                        "' is not a time-1 covariate");
    }
  }
}

TrajectoryDataset::TrajectoryDataset(int tau,
                                     std::vector<Eigen::MatrixXd> covariates,
                                     Eigen::MatrixXi treatments,
                                     Eigen::VectorXd outcome,
                                     TreatmentSupport support, DataSchema schema)
    : tau_(tau),
      covariates_(std::move(covariates)),
      treatments_(std::move(treatments)),
      outcome_(std::move(outcome)),
      support_(std::move(support)),
      schema_(std::move(schema)) {
  const int n = static_cast<int>(outcome_.size());
  if (n < 1) throw ContractError("dataset: need n >= 1 rows");
  if (treatments_.rows() != n || treatments_.cols() != tau_) {
    throw ContractError("dataset: treatment matrix shape mismatch");
  }
  if (static_cast<int>(covariates_.size()) != tau_) {
    throw ContractError("dataset: covariate block count != tau");
  }
  for (const auto& block : covariates_) {
    if (block.rows() != n) throw ContractError("dataset: covariate rows != n");
    if (!block.allFinite()) throw ContractError("dataset: non-finite covariate");
  }
  if (!outcome_.allFinite()) throw ContractError("dataset: non-finite outcome");
  support_.validate();
  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= tau_; ++t) {
      if (!support_.contains(t, treatments_(i, t - 1))) {
        throw ContractError("dataset: treatment out of support at row " +
                            std::to_string(i) + ", time " + std::to_string(t));
      }
    }
  }
  // Resolve the baseline subset of L_1. Empty schema list means all of L_1.
  if (schema_.baseline_cols.empty()) {
    for (int j = 0; j < covariates_[0].cols(); ++j) baseline_idx_.push_back(j);
  } else {
    for (const auto& name : schema_.baseline_cols) {
      auto it = std::find(schema_.covariate_cols[0].begin(),
                          schema_.covariate_cols[0].end(), name);
      baseline_idx_.push_back(
          static_cast<int>(it - schema_.covariate_cols[0].begin()));
    }
  }
}

Eigen::VectorXd TrajectoryDataset::baseline(int i) const {
  Eigen::VectorXd v(baseline_idx_.size());
  for (std::size_t k = 0; k < baseline_idx_.size(); ++k) {
    v(static_cast<int>(k)) = covariates_[0](i, baseline_idx_[k]);
  }
  return v;
}

int TrajectoryDataset::history_dim(int t) const {
  int dim = t - 1;
  for (int s = 1; s <= t; ++s) dim += covariate_dim(s);
  return dim;
}

Eigen::VectorXd TrajectoryDataset::history(int i, int t) const {
  if (t < 1 || t > tau_) {
    throw ContractError("history: time " + std::to_string(t) +
                        " out of range [1," + std::to_string(tau_) + "]");
  }
  Eigen::VectorXd h(history_dim(t));
  int pos = 0;
  for (int s = 1; s <= t - 1; ++s) h(pos++) = treatments_(i, s - 1);
  for (int s = 1; s <= t; ++s) {
    const auto& block = covariates_[s - 1];
    for (int j = 0; j < block.cols(); ++j) h(pos++) = block(i, j);
  }
  return h;
}

Trajectory TrajectoryDataset::row(int i) const {
  Trajectory tr;
  tr.covariates.reserve(tau_);
  for (int t = 1; t <= tau_; ++t) tr.covariates.push_back(covariates_[t - 1].row(i));
  tr.treatments.resize(tau_);
  for (int t = 1; t <= tau_; ++t) tr.treatments[t - 1] = treatments_(i, t - 1);
  tr.outcome = outcome_(i);
  return tr;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& cell, const std::string& col, int row) {
  const std::string s = trim(cell);
  if (s.empty()) {
    throw ParseError("missing value in column " + col + " at data row " +
                     std::to_string(row));
  }
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("cannot parse '" + s + "' in column " + col +
                     " at data row " + std::to_string(row));
  }
}

int parse_treatment(const std::string& cell, const std::string& col, int row) {
  const std::string s = trim(cell);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("treatment column " + col + " has non-integer value '" +
                     s + "' at data row " + std::to_string(row));
  }
  return value;
}

}  // namespace

TrajectoryDataset load_csv(const std::string& path, const DataSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path);
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, int> col_of;
  for (std::size_t j = 0; j < header.size(); ++j) col_of[trim(header[j])] = static_cast<int>(j);

  auto require_col = [&](const std::string& name) {
    auto it = col_of.find(name);
    if (it == col_of.end()) {
      throw SchemaError("column '" + name + "' not found in " + path);
    }
    return it->second;
  };

  std::vector<int> a_idx;
  for (const auto& c : schema.treatment_cols) a_idx.push_back(require_col(c));
  std::vector<std::vector<int>> l_idx(schema.tau);
  for (int t = 0; t < schema.tau; ++t) {
    for (const auto& c : schema.covariate_cols[t]) l_idx[t].push_back(require_col(c));
  }
  const int y_idx = require_col(schema.outcome_col);

  std::vector<std::vector<double>> l_rows;  // flattened covariates per row
  std::vector<int> a_rows;
  std::vector<double> y_rows;
  int total_l = 0;
  for (int t = 0; t < schema.tau; ++t) total_l += static_cast<int>(l_idx[t].size());

  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    std::vector<double> lvals;
    lvals.reserve(total_l);
    for (int t = 0; t < schema.tau; ++t) {
      for (std::size_t k = 0; k < l_idx[t].size(); ++k) {
        lvals.push_back(parse_double(cells[l_idx[t][k]],
                                     schema.covariate_cols[t][k], row));
      }
    }
    for (int t = 0; t < schema.tau; ++t) {
      a_rows.push_back(
          parse_treatment(cells[a_idx[t]], schema.treatment_cols[t], row));
    }
    const double y = parse_double(cells[y_idx], schema.outcome_col, row);
    if (!std::isfinite(y)) {
      throw ParseError("non-finite outcome at data row " + std::to_string(row));
    }
    y_rows.push_back(y);
    l_rows.push_back(std::move(lvals));
  }
  if (row == 0) throw ParseError("no data rows in " + path);

  const int n = row;
  std::vector<Eigen::MatrixXd> covariates;
  int off = 0;
  for (int t = 0; t < schema.tau; ++t) {
    const int dim = static_cast<int>(l_idx[t].size());
    Eigen::MatrixXd block(n, dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) block(i, j) = l_rows[i][off + j];
    }
    covariates.push_back(std::move(block));
    off += dim;
  }
  Eigen::MatrixXi treatments(n, schema.tau);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < schema.tau; ++t) treatments(i, t) = a_rows[i * schema.tau + t];
  }
  Eigen::VectorXd outcome(n);
  for (int i = 0; i < n; ++i) outcome(i) = y_rows[i];

  TreatmentSupport support;
  if (!schema.support_levels.empty()) {
    support.levels = schema.support_levels;
  } else {
    for (int t = 0; t < schema.tau; ++t) {
      std::set<int> seen;
      for (int i = 0; i < n; ++i) seen.insert(treatments(i, t));
      support.levels.emplace_back(seen.begin(), seen.end());
    }
  }
  return TrajectoryDataset(schema.tau, std::move(covariates),
                           std::move(treatments), std::move(outcome),
                           std::move(support), schema);
}

void write_csv(const TrajectoryDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  const auto& schema = ds.schema();
  bool first = true;
  auto emit = [&](const std::string& name) {
    if (!first) out << ",";
    out << name;
    first = false;
  };
  for (int t = 0; t < schema.tau; ++t) {
    for (const auto& c : schema.covariate_cols[t]) emit(c);
    emit(schema.treatment_cols[t]);
  }
  emit(schema.outcome_col);
  out << "\n";

  char buf[40];
  auto emit_double = [&](double v) {
    // %.17g round-trips IEEE doubles exactly.
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << "," << buf;
  };
  for (int i = 0; i < ds.n(); ++i) {
    bool lead = true;
    for (int t = 1; t <= ds.tau(); ++t) {
      const auto& block = ds.covariates(t);
      for (int j = 0; j < block.cols(); ++j) {
        if (lead) {
          std::snprintf(buf, sizeof(buf), "%.17g", block(i, j));
          out << buf;
          lead = false;
        } else {
          emit_double(block(i, j));
        }
      }
      out << "," << ds.treatment(i, t);
    }
    emit_double(ds.outcome(i));
    out << "\n";
  }
}

TrajectoryDataset make_dataset(int tau, std::vector<Eigen::MatrixXd> covariates,
                               Eigen::MatrixXi treatments,
                               Eigen::VectorXd outcome,
                               std::vector<std::vector<int>> support_levels) {
  const int n = static_cast<int>(outcome.size());
  TreatmentSupport support;
  if (!support_levels.empty()) {
    support.levels = std::move(support_levels);
  } else {
    for (int t = 0; t < tau; ++t) {
      std::set<int> seen;
      for (int i = 0; i < n; ++i) seen.insert(treatments(i, t));
      support.levels.emplace_back(seen.begin(), seen.end());
    }
  }
  DataSchema schema;
  schema.tau = tau;
  for (int t = 1; t <= tau; ++t) {
    schema.treatment_cols.push_back("A" + std::to_string(t));
    std::vector<std::string> block;
    const int dim = static_cast<int>(covariates[t - 1].cols());
    for (int j = 0; j < dim; ++j) {
      block.push_back(dim == 1 ? "L" + std::to_string(t)
                               : "L" + std::to_string(t) + "_" + std::to_string(j + 1));
    }
    schema.covariate_cols.push_back(std::move(block));
  }
  schema.outcome_col = "Y";
  return TrajectoryDataset(tau, std::move(covariates), std::move(treatments),
                           std::move(outcome), std::move(support),
                           std::move(schema));
}

}  // namespace msmkit
