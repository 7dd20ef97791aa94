#include "hiermodel/moments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hiermodel {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

} // namespace

int DataTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end())
    throw std::invalid_argument("unknown column: " + name);
  return static_cast<int>(it - columns.begin());
}

DataTable ingest_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("ingest_csv: empty input, expected a header row");
  const std::vector<std::string> header = split_csv_line(line);

  int group_idx = -1, cluster_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!schema.group_column.empty() && header[i] == schema.group_column)
      group_idx = static_cast<int>(i);
    if (!schema.cluster_column.empty() && header[i] == schema.cluster_column)
      cluster_idx = static_cast<int>(i);
  }
  if (!schema.group_column.empty() && group_idx < 0)
    throw std::invalid_argument("ingest_csv: unknown column in schema: " +
                                schema.group_column);
  if (!schema.cluster_column.empty() && cluster_idx < 0)
    throw std::invalid_argument("ingest_csv: unknown column in schema: " +
                                schema.cluster_column);

  DataTable table;
  table.group_column = schema.group_column;
  table.cluster_column = schema.cluster_column;
  std::vector<int> numeric_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) == group_idx || static_cast<int>(i) == cluster_idx)
      continue;
    table.columns.push_back(header[i]);
    numeric_cols.push_back(static_cast<int>(i));
  }

  std::vector<std::vector<double>> rows;
  int row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("ingest_csv: malformed row " +
                                  std::to_string(row_index) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    std::vector<double> row(numeric_cols.size());
    for (std::size_t k = 0; k < numeric_cols.size(); ++k) {
      const std::string& cell = fields[numeric_cols[k]];
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != cell.size() || cell.empty() || !std::isfinite(v))
        throw std::invalid_argument("ingest_csv: non-numeric cell at row " +
                                    std::to_string(row_index) + ", column '" +
                                    header[numeric_cols[k]] + "': '" + cell + "'");
      row[k] = v;
    }
    rows.push_back(std::move(row));
    if (group_idx >= 0) table.group_labels.push_back(fields[group_idx]);
    if (cluster_idx >= 0) table.cluster_labels.push_back(fields[cluster_idx]);
  }

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(numeric_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < numeric_cols.size(); ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return table;
}

DataTable ingest_csv_file(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  return ingest_csv(in, schema);
}

int GroupedData::n_total() const {
  int n = 0;
  for (const auto& g : groups) n += g.n;
  return n;
}

int GroupedData::variable_index(const std::string& name) const {
  const auto it = std::find(variables.begin(), variables.end(), name);
  if (it == variables.end())
    throw std::invalid_argument("unknown variable: " + name);
  return static_cast<int>(it - variables.begin());
}

const GroupMoments& GroupedData::group(const std::string& label) const {
  for (const auto& g : groups)
    if (g.label == label) return g;
  throw std::invalid_argument("unknown group label: " + label);
}

GroupedData group_moments(const DataTable& table, const std::string& group,
                          const std::vector<std::string>& vars) {
  if (vars.empty())
    throw std::invalid_argument("group_moments: empty variable list");
  if (table.group_column != group || table.group_labels.empty())
    throw std::invalid_argument("group_moments: table has no group column '" +
                                group + "'");
  std::vector<int> idx;
  idx.reserve(vars.size());
  for (const auto& v : vars) idx.push_back(table.column_index(v));
  const int p = static_cast<int>(vars.size());

  // two-pass: means first, then deviation SSCP
  std::map<std::string, std::pair<int, Eigen::VectorXd>> sums;
  for (int r = 0; r < table.n_rows(); ++r) {
    auto& [n, s] = sums[table.group_labels[r]];
    if (n == 0) s = Eigen::VectorXd::Zero(p);
    ++n;
    for (int j = 0; j < p; ++j) s[j] += table.values(r, idx[j]);
  }

  GroupedData out;
  out.variables = vars;
  std::map<std::string, int> order;
  for (const auto& [label, ns] : sums) {
    GroupMoments g;
    g.label = label;
    g.n = ns.first;
    g.mean = ns.second / ns.first;
    g.within_sscp = Eigen::MatrixXd::Zero(p, p);
    order[label] = static_cast<int>(out.groups.size());
    out.groups.push_back(std::move(g));
  }
  Eigen::VectorXd dev(p);
  for (int r = 0; r < table.n_rows(); ++r) {
    GroupMoments& g = out.groups[order[table.group_labels[r]]];
    for (int j = 0; j < p; ++j) dev[j] = table.values(r, idx[j]) - g.mean[j];
    g.within_sscp.noalias() += dev * dev.transpose();
  }
  return out;
}

std::pair<GroupedData, PooledMoments> moments_from_summary(
    const std::vector<std::string>& variables,
    const std::vector<GroupSummary>& groups, const Eigen::MatrixXd& within_sscp) {
  if (groups.empty())
    throw std::invalid_argument("moments_from_summary: need at least one group");
  const int p = static_cast<int>(variables.size());
  if (within_sscp.rows() != p || within_sscp.cols() != p)
    throw std::invalid_argument(
        "moments_from_summary: within SSCP dimension does not match variable count");

  GroupedData grouped;
  grouped.variables = variables;
  double df_within = 0.0;
  for (const auto& gs : groups) {
    if (gs.mean.size() != p)
      throw std::invalid_argument(
          "moments_from_summary: mean vector dimension mismatch for group '" +
          gs.label + "'");
    df_within += gs.n - 1;
  }
  for (const auto& gs : groups) {
    GroupMoments g;
    g.label = gs.label;
    g.n = gs.n;
    g.mean = gs.mean;
    const double share = df_within > 0 ? (gs.n - 1) / df_within : 1.0 / groups.size();
    g.within_sscp = share * within_sscp;
    grouped.groups.push_back(std::move(g));
  }
  return {grouped, pool(grouped)};
}

PooledMoments pool(const GroupedData& grouped) {
  const int p = static_cast<int>(grouped.variables.size());
  PooledMoments pm;
  pm.variables = grouped.variables;
  pm.n_total = grouped.n_total();
  pm.grand_mean = Eigen::VectorXd::Zero(p);
  for (const auto& g : grouped.groups) pm.grand_mean += g.n * g.mean;
  pm.grand_mean /= pm.n_total;

  pm.total_sscp = Eigen::MatrixXd::Zero(p, p);
  for (const auto& g : grouped.groups) {
    const Eigen::VectorXd d = g.mean - pm.grand_mean;
    pm.total_sscp += g.within_sscp + g.n * (d * d.transpose());
  }
  if (pm.n_total < 2)
    throw std::invalid_argument("pool: need at least two observations");
  pm.covariance = pm.total_sscp / (pm.n_total - 1);

  pm.correlation = Eigen::MatrixXd::Identity(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double denom = std::sqrt(pm.covariance(i, i) * pm.covariance(j, j));
      if (denom > 0.0) pm.correlation(i, j) = pm.covariance(i, j) / denom;
    }
  return pm;
}

Eigen::MatrixXd correlation_matrix(const PooledMoments& pooled) {
  const int p = static_cast<int>(pooled.variables.size());
  for (int i = 0; i < p; ++i)
    if (pooled.covariance(i, i) <= 0.0)
      throw std::invalid_argument("correlation_matrix: zero variance for variable '" +
                                  pooled.variables[i] + "'");
  Eigen::MatrixXd r(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      r(i, j) = pooled.covariance(i, j) /
                std::sqrt(pooled.covariance(i, i) * pooled.covariance(j, j));
  return r;
}

} // namespace hiermodel
