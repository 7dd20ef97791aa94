#pragma once

#include "hiermodel/moments.hpp"

#include <optional>

namespace hiermodel {

struct RegressionResult {
  double intercept = 0.0;  // mean of the reference (dummy 0) group
  double beta = 0.0;       // coded-1 group mean minus reference group mean
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
  double r2 = 0.0;
};

struct AnovaResult {
  double ss_between = 0.0;
  double ss_within = 0.0;
  int df_between = 0;
  int df_within = 0;
  double f = 0.0;
  double p = 1.0;
};

// Dummy-coded two-group regression from sufficient statistics.  The
// reference group (coded 0) defaults to the first label in sorted order.
RegressionResult ols_two_group(const GroupedData& grouped,
                               const std::string& outcome,
                               const std::optional<std::string>& reference = {});

// k-group dummy regression: one coefficient per non-reference group.
struct KGroupRegressionResult {
  std::string reference;
  std::vector<std::string> labels;  // non-reference groups, coded order
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  double intercept = 0.0;
  double r2 = 0.0;
};
KGroupRegressionResult ols_k_group(const GroupedData& grouped,
                                   const std::string& outcome,
                                   const std::optional<std::string>& reference = {});

AnovaResult anova_oneway(const GroupedData& grouped, const std::string& outcome);

} // namespace hiermodel
