#include "hiermodel/univariate.hpp"

#include "hiermodel/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hiermodel {

namespace {

struct OneVarDecomposition {
  double ss_between = 0.0;
  double ss_within = 0.0;
  double grand_mean = 0.0;
};

OneVarDecomposition decompose(const GroupedData& grouped, int v) {
  const int n_total = grouped.n_total();
  OneVarDecomposition d;
  for (const auto& g : grouped.groups) d.grand_mean += g.n * g.mean[v];
  d.grand_mean /= n_total;
  for (const auto& g : grouped.groups) {
    const double dev = g.mean[v] - d.grand_mean;
    d.ss_between += g.n * dev * dev;
    d.ss_within += g.within_sscp(v, v);
  }
  return d;
}

int reference_index(const GroupedData& grouped,
                    const std::optional<std::string>& reference) {
  if (reference) {
    for (std::size_t i = 0; i < grouped.groups.size(); ++i)
      if (grouped.groups[i].label == *reference) return static_cast<int>(i);
    throw std::invalid_argument("unknown reference group: " + *reference);
  }
  int best = 0;
  for (std::size_t i = 1; i < grouped.groups.size(); ++i)
    if (grouped.groups[i].label < grouped.groups[best].label)
      best = static_cast<int>(i);
  return best;
}

} // namespace

RegressionResult ols_two_group(const GroupedData& grouped,
                               const std::string& outcome,
                               const std::optional<std::string>& reference) {
  if (grouped.groups.size() != 2)
    throw std::invalid_argument("ols_two_group: exactly two groups required");
  const int v = grouped.variable_index(outcome);
  const int ref = reference_index(grouped, reference);
  const GroupMoments& g0 = grouped.groups[ref];
  const GroupMoments& g1 = grouped.groups[1 - ref];
  if (g0.n < 1 || g1.n < 1)
    throw std::invalid_argument("ols_two_group: empty group");
  const int n_total = g0.n + g1.n;
  if (n_total < 3)
    throw std::invalid_argument("ols_two_group: need at least 3 observations");

  const auto d = decompose(grouped, v);
  const double ss_total = d.ss_between + d.ss_within;
  if (ss_total <= 0.0)
    throw std::invalid_argument("ols_two_group: outcome has zero total variance");

  RegressionResult r;
  r.intercept = g0.mean[v];
  r.beta = g1.mean[v] - g0.mean[v];
  const double mse = d.ss_within / (n_total - 2);
  r.se = std::sqrt(mse * (1.0 / g0.n + 1.0 / g1.n));
  r.t = r.se > 0.0 ? r.beta / r.se : 0.0;
  r.p = t_two_sided(r.t, n_total - 2);
  r.r2 = d.ss_between / ss_total;
  return r;
}

KGroupRegressionResult ols_k_group(const GroupedData& grouped,
                                   const std::string& outcome,
                                   const std::optional<std::string>& reference) {
  const int k = static_cast<int>(grouped.groups.size());
  if (k < 2) throw std::invalid_argument("ols_k_group: need at least two groups");
  const int v = grouped.variable_index(outcome);
  const int ref = reference_index(grouped, reference);
  const int n_total = grouped.n_total();
  const int df_resid = n_total - k;
  if (df_resid < 1)
    throw std::invalid_argument("ols_k_group: no residual degrees of freedom");

  const auto d = decompose(grouped, v);
  const double ss_total = d.ss_between + d.ss_within;
  if (ss_total <= 0.0)
    throw std::invalid_argument("ols_k_group: outcome has zero total variance");
  const double mse = d.ss_within / df_resid;

  KGroupRegressionResult r;
  const GroupMoments& g0 = grouped.groups[ref];
  r.reference = g0.label;
  r.intercept = g0.mean[v];
  r.beta.resize(k - 1);
  r.se.resize(k - 1);
  r.t.resize(k - 1);
  r.p.resize(k - 1);
  int j = 0;
  for (int i = 0; i < k; ++i) {
    if (i == ref) continue;
    const GroupMoments& g = grouped.groups[i];
    r.labels.push_back(g.label);
    r.beta[j] = g.mean[v] - g0.mean[v];
    r.se[j] = std::sqrt(mse * (1.0 / g0.n + 1.0 / g.n));
    r.t[j] = r.se[j] > 0.0 ? r.beta[j] / r.se[j] : 0.0;
    r.p[j] = t_two_sided(r.t[j], df_resid);
    ++j;
  }
  r.r2 = d.ss_between / ss_total;
  return r;
}

AnovaResult anova_oneway(const GroupedData& grouped, const std::string& outcome) {
  const int k = static_cast<int>(grouped.groups.size());
  if (k < 2) throw std::invalid_argument("anova_oneway: need at least two groups");
  const int v = grouped.variable_index(outcome);
  const int n_total = grouped.n_total();
  if (n_total < k + 1)
    throw std::invalid_argument("anova_oneway: no within-group degrees of freedom");

  const auto d = decompose(grouped, v);
  AnovaResult a;
  a.ss_between = d.ss_between;
  a.ss_within = d.ss_within;
  a.df_between = k - 1;
  a.df_within = n_total - k;
  if (a.ss_within <= 0.0)
    throw std::invalid_argument("anova_oneway: zero within-group variance");
  a.f = (a.ss_between / a.df_between) / (a.ss_within / a.df_within);
  a.p = f_upper_tail(a.f, a.df_between, a.df_within);
  return a;
}

} // namespace hiermodel
