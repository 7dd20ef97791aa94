#pragma once

#include "hiermodel/moments.hpp"

#include <limits>
#include <string>
#include <vector>

namespace hiermodel {

// Fixed-or-free parameter slot.  For a fixed slot `value` is the fixed
// value; for a free slot it is the start value (NaN = module default).
struct Param {
  bool free = true;
  double value = std::numeric_limits<double>::quiet_NaN();

  static Param fixed(double v) { return {false, v}; }
  static Param free_at(double v) { return {true, v}; }
};

// Single-factor model with optional observed cause: exogenous x -> latent
// eta -> indicators y.  Error covariances are identically zero.
struct PathModel {
  std::string latent = "factor";
  std::string exogenous;  // empty = no structural part (plain CFA)
  std::vector<std::string> indicators;

  std::vector<Param> loadings;           // one per indicator
  Param structural = Param::free_at(0);  // gamma, ignored without exogenous
  Param factor_residual;                 // psi
  std::vector<Param> error_variances;    // theta, one per indicator
  Param exogenous_variance = Param::fixed(
      std::numeric_limits<double>::quiet_NaN());  // NaN fixed = use sample value

  // Observed order used for all matrices: [exogenous if any] + indicators.
  std::vector<std::string> observed() const;
  int n_free() const;
  int n_observed() const { return static_cast<int>(indicators.size()) +
                                  (exogenous.empty() ? 0 : 1); }
  int degrees_of_freedom() const;  // p*(p*+1)/2 - n_free

  // Standard shape: all loadings free except the metric indicator fixed at
  // 1; gamma, psi and all thetas free; exogenous variance fixed at sample.
  static PathModel mimic(const std::string& exogenous,
                         const std::vector<std::string>& indicators,
                         int metric_indicator);
};

// Sample covariance with named variables.
struct SampleCov {
  std::vector<std::string> variables;
  Eigen::MatrixXd covariance;
};

struct Standardized {
  double gamma_std = 0.0;
  Eigen::VectorXd loadings_std;
  double residual_variance_std = 1.0;
  double r2_latent = 0.0;
};

struct FitReport {
  std::vector<std::string> parameter_names;
  Eigen::VectorXd estimates;        // natural scale
  Eigen::VectorXd standard_errors;  // empty when unavailable
  bool se_available = false;
  double fml = 0.0;
  double chi_square = 0.0;
  int df = 0;
  double p = 1.0;
  int n = 0;
  Eigen::MatrixXd implied_covariance;
  Standardized standardized;
  bool converged = false;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

// Model-implied covariance of the observed variables.  `free_values` holds
// the free parameters in report order (natural scale).
Eigen::MatrixXd implied_covariance(const PathModel& model,
                                   const Eigen::VectorXd& free_values);

// ML discrepancy ln|Sigma| + tr(S Sigma^-1) - ln|S| - p.  Throws on a
// non-PD input, reporting the smallest Cholesky pivot.
double fml(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied);

// Gradient of fml(sample, implied(model, values)) with respect to the free
// parameters on the natural scale.
Eigen::VectorXd fml_gradient(const PathModel& model,
                             const Eigen::VectorXd& free_values,
                             const Eigen::MatrixXd& sample);

// Quasi-Newton ML fit.  `sample` must cover every model variable; n is the
// number of observations behind the covariance.
FitReport fit_ml(const PathModel& model, const SampleCov& sample, int n);

Standardized standardize(const PathModel& model,
                         const Eigen::VectorXd& free_values);

// Free-parameter names in estimation order: lambda.<ind>, gamma, psi,
// theta.<ind>, var.<exogenous>.
std::vector<std::string> parameter_names(const PathModel& model);

} // namespace hiermodel
