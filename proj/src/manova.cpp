#include "hiermodel/manova.hpp"

#include "hiermodel/distributions.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace hiermodel {

namespace {

// LU with partial pivoting; returns determinant and the smallest absolute
// pivot encountered.
std::pair<double, double> lu_determinant(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  double det = 1.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  for (int col = 0; col < n; ++col) {
    int pivot_row = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot_row, col))) pivot_row = r;
    if (pivot_row != col) {
      a.row(pivot_row).swap(a.row(col));
      det = -det;
    }
    const double pivot = a(col, col);
    min_pivot = std::min(min_pivot, std::fabs(pivot));
    if (pivot == 0.0) return {0.0, 0.0};
    det *= pivot;
    for (int r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / pivot;
      a.row(r).tail(n - col) -= factor * a.row(col).tail(n - col);
    }
  }
  return {det, min_pivot};
}

} // namespace

double determinant(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("determinant: matrix must be square");
  if (m.rows() == 0) return 1.0;
  return lu_determinant(m).first;
}

SscpPartition sscp_partition(const GroupedData& grouped,
                             const std::vector<std::string>& vars) {
  if (grouped.groups.size() < 2)
    throw std::invalid_argument("sscp_partition: need at least two groups");
  if (vars.empty())
    throw std::invalid_argument("sscp_partition: empty variable list");
  std::vector<int> idx;
  for (const auto& v : vars) idx.push_back(grouped.variable_index(v));
  const int p = static_cast<int>(vars.size());

  SscpPartition part;
  part.variables = vars;
  part.n_total = grouped.n_total();
  part.n_groups = static_cast<int>(grouped.groups.size());

  Eigen::VectorXd grand = Eigen::VectorXd::Zero(p);
  for (const auto& g : grouped.groups)
    for (int j = 0; j < p; ++j) grand[j] += g.n * g.mean[idx[j]];
  grand /= part.n_total;

  part.within = Eigen::MatrixXd::Zero(p, p);
  part.between = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd dev(p);
  for (const auto& g : grouped.groups) {
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        part.within(i, j) += g.within_sscp(idx[i], idx[j]);
    for (int j = 0; j < p; ++j) dev[j] = g.mean[idx[j]] - grand[j];
    part.between.noalias() += g.n * (dev * dev.transpose());
  }
  part.total = part.within + part.between;
  return part;
}

SscpPartition sscp_partition(const GroupedData& grouped) {
  return sscp_partition(grouped, grouped.variables);
}

WilksResult wilks_test(const SscpPartition& partition) {
  const int p = static_cast<int>(partition.variables.size());
  const int k = partition.n_groups;
  const int n = partition.n_total;
  if (n <= k + p)
    throw std::invalid_argument(
        "wilks_test: insufficient observations (need n_total > n_groups + n_vars)");

  const auto [det_t, min_pivot] = lu_determinant(partition.total);
  const double scale = partition.total.cwiseAbs().maxCoeff();
  if (min_pivot < 1e-10 * scale)
    throw std::invalid_argument(
        "wilks_test: total SSCP matrix is singular (collinear outcomes?)");

  WilksResult w;
  w.det_total = det_t;
  w.det_within = determinant(partition.within);
  w.lambda = w.det_within / w.det_total;

  // Rao's F approximation; exact when k = 2 (or p <= 2)
  const double m = n - 1 - 0.5 * (p + k);
  const double pk = static_cast<double>(p) * (k - 1);
  const double denom = p * p + (k - 1.0) * (k - 1.0) - 5.0;
  const double s =
      denom > 0.0 ? std::sqrt((pk * pk - 4.0) / denom) : 1.0;
  w.df1 = pk;
  w.df2 = m * s - 0.5 * pk + 1.0;
  const double lam_s = std::pow(w.lambda, 1.0 / s);
  w.f_approx = lam_s > 0.0 ? (1.0 - lam_s) / lam_s * (w.df2 / w.df1)
                           : std::numeric_limits<double>::infinity();
  w.p = std::isfinite(w.f_approx) ? f_upper_tail(w.f_approx, w.df1, w.df2) : 0.0;

  w.chi2_bartlett = w.lambda > 0.0 ? -m * std::log(w.lambda)
                                   : std::numeric_limits<double>::infinity();
  w.p_bartlett = std::isfinite(w.chi2_bartlett)
                     ? chi2_upper_tail(w.chi2_bartlett, pk)
                     : 0.0;
  return w;
}

} // namespace hiermodel
