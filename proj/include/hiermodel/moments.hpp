#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

namespace hiermodel {

// Rectangular numeric table with optional group / cluster label columns.
// Immutable after ingestion.
struct DataTable {
  std::vector<std::string> columns;     // numeric column names
  Eigen::MatrixXd values;               // n_rows x columns.size()
  std::string group_column;             // empty if absent
  std::vector<std::string> group_labels;
  std::string cluster_column;           // empty if absent
  std::vector<std::string> cluster_labels;

  int n_rows() const { return static_cast<int>(values.rows()); }
  int column_index(const std::string& name) const;  // throws on unknown name
};

struct CsvSchema {
  std::string group_column;    // empty = none
  std::string cluster_column;  // empty = none
};

// Parse a comma-separated stream with a header row.  Columns named in the
// schema become label columns; everything else must parse as a finite number.
DataTable ingest_csv(std::istream& in, const CsvSchema& schema = {});
DataTable ingest_csv_file(const std::string& path, const CsvSchema& schema = {});

// Per-group sufficient statistics over a variable set.
struct GroupMoments {
  std::string label;
  int n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd within_sscp;  // deviation SSCP about the group mean
};

struct PooledMoments {
  std::vector<std::string> variables;
  int n_total = 0;
  Eigen::VectorXd grand_mean;
  Eigen::MatrixXd total_sscp;
  Eigen::MatrixXd covariance;   // total_sscp / (n_total - 1)
  Eigen::MatrixXd correlation;
};

// Named variable set plus its per-group moments; the unit every grouped
// analysis consumes.
struct GroupedData {
  std::vector<std::string> variables;
  std::vector<GroupMoments> groups;

  int n_total() const;
  int variable_index(const std::string& name) const;
  const GroupMoments& group(const std::string& label) const;
};

// Group rows by the given label column and accumulate moments for the named
// variables.  Groups come back sorted by label.
GroupedData group_moments(const DataTable& table, const std::string& group,
                          const std::vector<std::string>& vars);

struct GroupSummary {
  std::string label;
  int n = 0;
  Eigen::VectorXd mean;
};

// Rebuild grouped + pooled moments from published summaries: group sizes,
// group means, and the pooled within-group SSCP.  Only the sum of the
// per-group within matrices is known from summaries, so it is apportioned
// across groups pro rata by n_g - 1; downstream analyses use only the sum.
std::pair<GroupedData, PooledMoments> moments_from_summary(
    const std::vector<std::string>& variables,
    const std::vector<GroupSummary>& groups, const Eigen::MatrixXd& within_sscp);

// Pooled moments from grouped data (grand mean, total SSCP, covariance,
// correlation).
PooledMoments pool(const GroupedData& grouped);

// r_ij = cov_ij / sqrt(cov_ii * cov_jj); throws naming any zero-variance
// variable.
Eigen::MatrixXd correlation_matrix(const PooledMoments& pooled);

} // namespace hiermodel
