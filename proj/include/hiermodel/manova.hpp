#pragma once

#include "hiermodel/moments.hpp"

namespace hiermodel {

struct SscpPartition {
  std::vector<std::string> variables;
  Eigen::MatrixXd within;
  Eigen::MatrixXd between;
  Eigen::MatrixXd total;
  int n_total = 0;
  int n_groups = 0;
};

struct WilksResult {
  double lambda = 1.0;
  double det_within = 0.0;
  double det_total = 0.0;
  double f_approx = 0.0;  // Rao's approximation (exact for two groups)
  double df1 = 0.0;
  double df2 = 0.0;
  double p = 1.0;
  double chi2_bartlett = 0.0;  // Bartlett's alternative mapping
  double p_bartlett = 1.0;
};

SscpPartition sscp_partition(const GroupedData& grouped,
                             const std::vector<std::string>& vars);
SscpPartition sscp_partition(const GroupedData& grouped);  // all variables

// Determinant by LU factorization with partial pivoting, sign tracked from
// row swaps.
double determinant(const Eigen::MatrixXd& m);

WilksResult wilks_test(const SscpPartition& partition);

} // namespace hiermodel
