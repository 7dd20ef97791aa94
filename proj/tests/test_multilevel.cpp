#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiermodel/multilevel.hpp"

#include <cmath>
#include <random>

using namespace hiermodel;

namespace {

DataTable clustered_table(const std::vector<std::vector<double>>& clusters) {
  DataTable t;
  t.columns = {"y"};
  t.cluster_column = "cluster";
  int n = 0;
  for (const auto& c : clusters) n += static_cast<int>(c.size());
  t.values.resize(n, 1);
  int row = 0;
  for (std::size_t j = 0; j < clusters.size(); ++j)
    for (double v : clusters[j]) {
      t.values(row++, 0) = v;
      t.cluster_labels.push_back("c" + std::to_string(j));
    }
  return t;
}

} // namespace

TEST_CASE("two-level decomposition: hand-computed example") {
  // clusters {0,2} and {4,6}: within SS = 4 over N-J = 2, between
  // SS = 2*4 + 2*4 over J-1 = 1, c = (16 - 8) / (4 * 1) = 2
  const DataTable t = clustered_table({{0, 2}, {4, 6}});
  const TwoLevelMoments m = decompose_two_level(t, {"y"});
  CHECK(m.n_total == 4);
  CHECK(m.j_clusters == 2);
  CHECK(m.s_pw(0, 0) == doctest::Approx(2.0));
  CHECK(m.s_b(0, 0) == doctest::Approx(16.0));
  CHECK(m.c_scale == doctest::Approx(2.0));
  CHECK(m.grand_mean[0] == doctest::Approx(3.0));

  const VarianceComponents vc = variance_components(m);
  CHECK(vc.sigma2_within == doctest::Approx(2.0));
  CHECK(vc.sigma2_between == doctest::Approx(7.0));
  CHECK(vc.icc == doctest::Approx(7.0 / 9.0));
  CHECK(vc.gamma00 == doctest::Approx(3.0));
  CHECK(!vc.truncated);
}

TEST_CASE("balanced design has c equal to the cluster size") {
  std::mt19937 rng(9);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<double>> clusters(7, std::vector<double>(5));
  for (auto& c : clusters)
    for (auto& v : c) v = noise(rng);
  const TwoLevelMoments m =
      decompose_two_level(clustered_table(clusters), {"y"});
  CHECK(m.c_scale == doctest::Approx(5.0));
}

TEST_CASE("unbalanced c matches its definition") {
  const DataTable t = clustered_table({{1, 2, 3}, {4, 5}, {6}});
  const TwoLevelMoments m = decompose_two_level(t, {"y"});
  // N = 6, sum n_j^2 = 9 + 4 + 1 = 14, J = 3
  CHECK(m.c_scale == doctest::Approx((36.0 - 14.0) / (6.0 * 2.0)));
}

TEST_CASE("negative moment estimate is truncated and flagged") {
  // between-cluster means closer than chance: huge within, identical means
  const DataTable t = clustered_table({{-10, 10}, {-10, 10}, {-10, 10}});
  const VarianceComponents vc =
      variance_components(decompose_two_level(t, {"y"}));
  CHECK(vc.sigma2_between == 0.0);
  CHECK(vc.icc == 0.0);
  CHECK(vc.truncated);
}

TEST_CASE("degenerate layouts are rejected") {
  CHECK_THROWS_AS(decompose_two_level(clustered_table({{1, 2, 3}}), {"y"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(decompose_two_level(clustered_table({{1}, {2}, {3}}), {"y"}),
                  std::invalid_argument);
  DataTable no_cluster = clustered_table({{1, 2}, {3, 4}});
  no_cluster.cluster_column.clear();
  no_cluster.cluster_labels.clear();
  CHECK_THROWS_AS(decompose_two_level(no_cluster, {"y"}),
                  std::invalid_argument);
}

TEST_CASE("implied two-level structure: trivial cases") {
  TwoLevelModel m;
  m.loadings = Eigen::MatrixXd::Zero(2, 1);
  m.factor_cov = Eigen::MatrixXd::Constant(1, 1, 4.0);
  m.theta_within = Eigen::MatrixXd::Identity(2, 2);
  m.theta_between = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  m.intercepts = Eigen::VectorXd::Constant(2, 3.0);
  m.between_loadings = Eigen::MatrixXd::Zero(2, 1);
  m.latent_means = Eigen::VectorXd::Constant(1, 9.0);

  // zero loadings: only the error structure survives
  const TwoLevelImplied zero = implied_two_level(m);
  CHECK(zero.sigma_w.isApprox(m.theta_within, 1e-12));
  CHECK(zero.sigma_b.isApprox(m.theta_between, 1e-12));
  CHECK(zero.mu.isApprox(m.intercepts, 1e-12));

  // unit loadings, psi 1, theta I within: [[2,1],[1,2]]
  m.loadings = Eigen::MatrixXd::Ones(2, 1);
  m.factor_cov = Eigen::MatrixXd::Identity(1, 1);
  const TwoLevelImplied unit = implied_two_level(m);
  Eigen::MatrixXd expect(2, 2);
  expect << 2, 1, 1, 2;
  CHECK(unit.sigma_w.isApprox(expect, 1e-12));

  // mean structure: mu = alpha + Lambda_B nu_B
  m.between_loadings = Eigen::MatrixXd::Ones(2, 1);
  const TwoLevelImplied mean = implied_two_level(m);
  CHECK(mean.mu[0] == doctest::Approx(12.0));
  CHECK(mean.mu[1] == doctest::Approx(12.0));
}

TEST_CASE("clustered generator is seed-deterministic") {
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Constant(2, 1.0);
  p.sigma_b = 0.3 * Eigen::MatrixXd::Identity(2, 2);
  p.sigma_w = Eigen::MatrixXd::Identity(2, 2);

  const DataTable a = generate_clustered(p, 6, 4, 777);
  const DataTable b = generate_clustered(p, 6, 4, 777);
  CHECK(a.values == b.values);
  CHECK(a.cluster_labels == b.cluster_labels);
  CHECK(a.n_rows() == 24);
  CHECK(a.cluster_labels.front() == "c1");
  CHECK(a.cluster_labels.back() == "c6");

  const DataTable c = generate_clustered(p, 6, 4, 778);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("generator honors a zero between-cluster covariance") {
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Zero(1);
  p.sigma_b = Eigen::MatrixXd::Zero(1, 1);
  p.sigma_w = Eigen::MatrixXd::Identity(1, 1);
  const DataTable t = generate_clustered(p, 50, 20, 4242);
  const VarianceComponents vc =
      variance_components(decompose_two_level(t, {"v1"}));
  // sigma2_between should be near zero, often truncated
  CHECK(vc.icc < 0.05);
  CHECK(vc.sigma2_between >= 0.0);
  CHECK(std::fabs(vc.sigma2_within - 1.0) < 0.1);
}

TEST_CASE("variance components recover a known intraclass correlation") {
  // sigma_b = 1, sigma_w = 3: population icc = 0.25
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Constant(1, 10.0);
  p.sigma_b = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.sigma_w = Eigen::MatrixXd::Constant(1, 1, 3.0);

  SimulationConfig cfg;
  cfg.params = p;
  cfg.clusters = 100;
  cfg.cluster_size = 10;
  cfg.seed = 20250815;
  cfg.replications = 200;
  const SimulationSummary s = simulate_variance_recovery(cfg);
  CHECK(s.replications == 200);
  CHECK(std::fabs(s.mean_icc - 0.25) < 0.02);
  CHECK(std::fabs(s.mean_sigma2_within - 3.0) < 0.1);
  CHECK(std::fabs(s.mean_sigma2_between - 1.0) < 0.1);
  CHECK(s.min_icc <= s.mean_icc);
  CHECK(s.max_icc >= s.mean_icc);
}

TEST_CASE("simulation summary does not depend on the thread count") {
  SimulationConfig cfg;
  cfg.params.mu = Eigen::VectorXd::Zero(1);
  cfg.params.sigma_b = Eigen::MatrixXd::Constant(1, 1, 0.5);
  cfg.params.sigma_w = Eigen::MatrixXd::Constant(1, 1, 2.0);
  cfg.clusters = 30;
  cfg.cluster_size = 8;
  cfg.seed = 99;
  cfg.replications = 64;
  const SimulationSummary s1 = simulate_variance_recovery(cfg, 1);
  const SimulationSummary s4 = simulate_variance_recovery(cfg, 4);
  const SimulationSummary s7 = simulate_variance_recovery(cfg, 7);
  CHECK(s1.mean_icc == s4.mean_icc);
  CHECK(s1.mean_icc == s7.mean_icc);
  CHECK(s1.mean_sigma2_between == s4.mean_sigma2_between);
  CHECK(s1.mean_sigma2_within == s7.mean_sigma2_within);
  CHECK(s1.min_icc == s4.min_icc);
  CHECK(s1.max_icc == s7.max_icc);
  CHECK(s1.truncated_count == s4.truncated_count);
}

TEST_CASE("derived seeds differ across replications") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(123, 45) == derive_seed(123, 45));
}

TEST_CASE("two-level factor fit: saturated structure fits exactly") {
  // single indicator with free within and between variances reproduces
  // s_pw and s_b exactly, so the discrepancy vanishes
  const DataTable t =
      clustered_table({{1, 2, 3}, {6, 7, 8}, {2, 4, 6}, {9, 9, 10}});
  const TwoLevelMoments m = decompose_two_level(t, {"y"});

  TwoLevelSemPattern pattern;
  pattern.indicators = {"y"};
  pattern.loadings = {Param::fixed(1.0)};
  pattern.factor_variance = Param::free_at(1.0);
  pattern.between_factor_variance = Param::free_at(0.5);
  pattern.theta_within = {Param::fixed(0.0)};
  pattern.theta_between = {Param::fixed(0.0)};

  const TwoLevelFit fit = fit_two_level_sem(m, pattern);
  REQUIRE(fit.converged);
  CHECK(fit.discrepancy < 1e-8);
  CHECK(fit.sigma_w_hat(0, 0) == doctest::Approx(m.s_pw(0, 0)).epsilon(1e-6));
  const double c = m.c_scale;
  CHECK(fit.sigma_w_hat(0, 0) + c * fit.sigma_b_hat(0, 0) ==
        doctest::Approx(m.s_b(0, 0)).epsilon(1e-6));
}

TEST_CASE("two-level factor fit recovers generating parameters") {
  // Sigma_W = L L' + 0.5 I, Sigma_B = 0.1 * Sigma_W with L = (1, .8, 1.2)
  Eigen::VectorXd lambda(3);
  lambda << 1.0, 0.8, 1.2;
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Zero(3);
  p.sigma_w = lambda * lambda.transpose() +
              0.5 * Eigen::MatrixXd::Identity(3, 3);
  p.sigma_b = 0.1 * p.sigma_w;

  const DataTable t = generate_clustered(p, 400, 12, 1234,
                                         {"y1", "y2", "y3"});
  const TwoLevelMoments m = decompose_two_level(t, {"y1", "y2", "y3"});

  TwoLevelSemPattern pattern;
  pattern.indicators = {"y1", "y2", "y3"};
  pattern.loadings = {Param::fixed(1.0), Param::free_at(1.0),
                      Param::free_at(1.0)};
  pattern.factor_variance = Param::free_at(1.0);
  pattern.between_factor_variance = Param::free_at(0.2);
  pattern.theta_within = {Param::free_at(0.5), Param::free_at(0.5),
                          Param::free_at(0.5)};
  pattern.theta_between = {Param::free_at(0.1), Param::free_at(0.1),
                           Param::free_at(0.1)};
  const TwoLevelFit fit = fit_two_level_sem(m, pattern);
  REQUIRE(fit.converged);
  // implied matrices track the sample decomposition
  CHECK((fit.sigma_w_hat - m.s_pw).cwiseAbs().maxCoeff() <
        0.1 * m.s_pw.cwiseAbs().maxCoeff());
  // loadings land near (0.8, 1.2)
  for (std::size_t i = 0; i < fit.parameter_names.size(); ++i) {
    if (fit.parameter_names[i] == "lambda.y2")
      CHECK(std::fabs(fit.estimates[static_cast<Eigen::Index>(i)] - 0.8) < 0.1);
    if (fit.parameter_names[i] == "lambda.y3")
      CHECK(std::fabs(fit.estimates[static_cast<Eigen::Index>(i)] - 1.2) < 0.1);
  }
}

TEST_CASE("two-level factor fit: no between variation drives the between "
          "components toward zero") {
  Eigen::VectorXd lambda(2);
  lambda << 1.0, 1.0;
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Zero(2);
  p.sigma_w = lambda * lambda.transpose() +
              0.4 * Eigen::MatrixXd::Identity(2, 2);
  p.sigma_b = Eigen::MatrixXd::Zero(2, 2);
  const DataTable t = generate_clustered(p, 300, 10, 555, {"y1", "y2"});
  const TwoLevelMoments m = decompose_two_level(t, {"y1", "y2"});

  TwoLevelSemPattern pattern;
  pattern.indicators = {"y1", "y2"};
  pattern.loadings = {Param::fixed(1.0), Param::free_at(1.0)};
  pattern.factor_variance = Param::free_at(1.0);
  pattern.between_factor_variance = Param::free_at(0.1);
  pattern.theta_within = {Param::free_at(0.4), Param::free_at(0.4)};
  pattern.theta_between = {Param::free_at(0.05), Param::free_at(0.05)};
  const TwoLevelFit fit = fit_two_level_sem(m, pattern);
  REQUIRE(fit.converged);
  CHECK(fit.sigma_b_hat.cwiseAbs().maxCoeff() < 0.05);
  CHECK(std::fabs(fit.sigma_w_hat(0, 0) - 1.4) < 0.1);
}

TEST_CASE("fit_random_intercept matches variance_components") {
  const DataTable t = clustered_table({{0, 2}, {4, 6}, {1, 3, 5}});
  const VarianceComponents direct =
      variance_components(decompose_two_level(t, {"y"}));
  const VarianceComponents wrapped = fit_random_intercept(t, "y");
  CHECK(wrapped.sigma2_within == doctest::Approx(direct.sigma2_within));
  CHECK(wrapped.sigma2_between == doctest::Approx(direct.sigma2_between));
  CHECK(wrapped.icc == doctest::Approx(direct.icc));
}

TEST_CASE("generator input checks") {
  ClusterSimParams p;
  p.mu = Eigen::VectorXd::Zero(2);
  p.sigma_b = Eigen::MatrixXd::Identity(2, 2);
  p.sigma_w = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(generate_clustered(p, 0, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_clustered(p, 5, 0, 1), std::invalid_argument);

  ClusterSimParams bad = p;
  bad.sigma_w = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(generate_clustered(bad, 3, 3, 1), std::invalid_argument);

  ClusterSimParams mismatched = p;
  mismatched.mu = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(generate_clustered(mismatched, 3, 3, 1),
                  std::invalid_argument);
}
