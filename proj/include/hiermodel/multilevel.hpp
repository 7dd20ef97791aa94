#pragma once

#include "hiermodel/moments.hpp"
#include "hiermodel/sem.hpp"

#include <cstdint>
#include <optional>

namespace hiermodel {

// Sample estimators of the within / between covariance structure:
// E[s_pw] = Sigma_W and E[s_b] = Sigma_W + c * Sigma_B.
struct TwoLevelMoments {
  std::vector<std::string> variables;
  Eigen::MatrixXd s_pw;  // pooled within-cluster covariance, divisor N - J
  Eigen::MatrixXd s_b;   // scaled between-cluster covariance, divisor J - 1
  Eigen::VectorXd grand_mean;
  int n_total = 0;
  int j_clusters = 0;
  std::vector<int> cluster_sizes;
  double c_scale = 0.0;  // (N^2 - sum n_j^2) / (N (J - 1)); equals n when balanced
};

TwoLevelMoments decompose_two_level(const DataTable& table,
                                    const std::vector<std::string>& vars);

struct VarianceComponents {
  double gamma00 = 0.0;
  double sigma2_between = 0.0;
  double sigma2_within = 0.0;
  double icc = 0.0;
  bool truncated = false;  // moment estimate of sigma2_between went negative
};

VarianceComponents fit_random_intercept(const DataTable& table,
                                        const std::string& outcome);
VarianceComponents variance_components(const TwoLevelMoments& moments);

// Population two-level covariance / mean structure with explicit matrices:
// sigma_w = L Psi L' + Theta_W, sigma_b = L Psi L' + Theta_B,
// mu = alpha_B + L_B nu_B.
struct TwoLevelModel {
  Eigen::MatrixXd loadings;          // p x m, shared across levels
  Eigen::MatrixXd factor_cov;        // m x m, symmetric
  Eigen::MatrixXd theta_within;      // p x p
  Eigen::MatrixXd theta_between;     // p x p
  Eigen::VectorXd intercepts;        // alpha_B, length p
  Eigen::MatrixXd between_loadings;  // Lambda_B for the mean structure
  Eigen::VectorXd latent_means;      // nu_B
};

struct TwoLevelImplied {
  Eigen::MatrixXd sigma_w;
  Eigen::MatrixXd sigma_b;
  Eigen::VectorXd mu;
};

TwoLevelImplied implied_two_level(const TwoLevelModel& model);

// Single-factor fit pattern for the pseudo-balanced two-level fit.  The
// factor variance is shared across levels unless a separate between factor
// variance is supplied.
struct TwoLevelSemPattern {
  std::vector<std::string> indicators;
  std::vector<Param> loadings;
  Param factor_variance = Param::free_at(1.0);  // psi
  std::optional<Param> between_factor_variance; // nullopt = shared psi
  std::vector<Param> theta_within;
  std::vector<Param> theta_between;
};

struct TwoLevelFit {
  std::vector<std::string> parameter_names;
  Eigen::VectorXd estimates;
  double discrepancy = 0.0;  // weighted combined fml, normalized by N - 1
  Eigen::MatrixXd sigma_w_hat;
  Eigen::MatrixXd sigma_b_hat;
  bool converged = false;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Limited-information ML: jointly minimizes fml(s_pw, Sigma_W) weighted by
// N - J and fml(s_b, Sigma_W + c Sigma_B) weighted by J - 1.
TwoLevelFit fit_two_level_sem(const TwoLevelMoments& moments,
                              const TwoLevelSemPattern& pattern);

// Clustered-data generator: y_ij = mu + u_j + e_ij with u_j ~ N(0, sigma_b)
// and e_ij ~ N(0, sigma_w).  Deterministic for a given seed.
struct ClusterSimParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma_b;  // PSD
  Eigen::MatrixXd sigma_w;  // PD
};

DataTable generate_clustered(const ClusterSimParams& params,
                             const std::vector<int>& cluster_sizes,
                             std::uint64_t seed,
                             std::vector<std::string> var_names = {});
DataTable generate_clustered(const ClusterSimParams& params, int clusters,
                             int cluster_size, std::uint64_t seed,
                             std::vector<std::string> var_names = {});

// Sub-seed for replication `index` of a master seed (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct SimulationConfig {
  ClusterSimParams params;
  int clusters = 0;
  int cluster_size = 0;
  std::uint64_t seed = 0;
  int replications = 1;
};

// Per-replication variance-component recovery, aggregated with compensated
// summation; results do not depend on the thread count.
struct SimulationSummary {
  int replications = 0;
  double mean_icc = 0.0;
  double min_icc = 0.0;
  double max_icc = 0.0;
  double mean_sigma2_within = 0.0;
  double mean_sigma2_between = 0.0;
  double mean_grand_variance = 0.0;
  int truncated_count = 0;
};

SimulationSummary simulate_variance_recovery(const SimulationConfig& config,
                                             int threads = 1);

} // namespace hiermodel
