#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiermodel/fixture.hpp"
#include "hiermodel/moments.hpp"

#include <algorithm>
#include <random>
#include <sstream>

using namespace hiermodel;

namespace {

// Independent SSCP oracle: direct deviation sums over raw rows.
Eigen::MatrixXd raw_sscp(const Eigen::MatrixXd& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  return centered.transpose() * centered;
}

DataTable random_grouped_table(std::mt19937& rng, int n_groups, int p) {
  std::uniform_int_distribution<int> size_dist(2, 9);
  std::normal_distribution<double> noise(0.0, 2.0);
  DataTable t;
  for (int j = 0; j < p; ++j) t.columns.push_back("v" + std::to_string(j));
  t.group_column = "g";
  std::vector<std::vector<double>> rows;
  for (int g = 0; g < n_groups; ++g) {
    const int n = size_dist(rng);
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(p);
      for (int j = 0; j < p; ++j) row[j] = 10.0 * g + noise(rng);
      rows.push_back(std::move(row));
      t.group_labels.push_back("g" + std::to_string(g));
    }
  }
  t.values.resize(static_cast<int>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < p; ++j) t.values(static_cast<int>(i), j) = rows[i][j];
  return t;
}

} // namespace

TEST_CASE("csv round trip") {
  std::istringstream in("a,b\n1,2\n3.5,4\n");
  const DataTable t = ingest_csv(in);
  CHECK(t.n_rows() == 2);
  CHECK(t.columns == std::vector<std::string>{"a", "b"});
  CHECK(t.values(1, 0) == 3.5);
}

TEST_CASE("csv errors name the offending cell") {
  std::istringstream bad("a,b\n1,2\n1,oops\n");
  CHECK_THROWS_WITH_AS(ingest_csv(bad), doctest::Contains("row 2"),
                       std::invalid_argument);
  std::istringstream bad2("a,b\n1,2\nx,3\n");
  CHECK_THROWS_WITH_AS(ingest_csv(bad2), doctest::Contains("column 'a'"),
                       std::invalid_argument);
  std::istringstream short_row("a,b\n1\n");
  CHECK_THROWS_WITH_AS(ingest_csv(short_row), doctest::Contains("malformed row 1"),
                       std::invalid_argument);
  std::istringstream ok("a,b,g\n1,2,x\n");
  CsvSchema schema;
  schema.group_column = "nope";
  CHECK_THROWS_WITH_AS(ingest_csv(ok, schema), doctest::Contains("nope"),
                       std::invalid_argument);
}

TEST_CASE("fixture raw reconstruction reproduces published moments") {
  // oracle: the synthetic table's raw moments must match the fixture SSCP
  const DataTable t = GenderFixture::synthetic_raw_table();
  CHECK(t.n_rows() == 14);
  const GroupedData g = group_moments(t, "gender", GenderFixture::variables());
  const auto& male = g.group("male");
  const auto& female = g.group("female");
  CHECK(male.n == 8);
  CHECK(female.n == 6);
  CHECK(male.mean.isApprox(GenderFixture::male_mean(), 1e-9));
  CHECK(female.mean.isApprox(GenderFixture::female_mean(), 1e-9));
  const Eigen::MatrixXd within = male.within_sscp + female.within_sscp;
  CHECK((within - GenderFixture::within_sscp()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::fabs(male.mean[1] - 679.75) < 1e-9);  // published math mean
  // per-group SDs land on the published table (math: corrected value)
  const auto sd = [](const GroupMoments& g, int v) {
    return std::sqrt(g.within_sscp(v, v) / (g.n - 1));
  };
  CHECK(std::fabs(sd(male, 0) - 37.01) < 0.005);
  CHECK(std::fabs(sd(male, 1) - 36.54) < 0.005);
  CHECK(std::fabs(sd(male, 2) - 27.78) < 0.005);
  CHECK(std::fabs(sd(female, 0) - 15.80) < 0.005);
  CHECK(std::fabs(sd(female, 1) - GenderFixture::female_math_sd_corrected()) < 0.005);
  CHECK(std::fabs(sd(female, 2) - 25.57) < 0.005);
}

TEST_CASE("group_moments trivial cases") {
  DataTable t;
  t.columns = {"y"};
  t.group_column = "g";
  t.values.resize(3, 1);
  t.values << 1, 3, 5;
  t.group_labels = {"a", "a", "b"};
  const GroupedData g = group_moments(t, "g", {"y"});
  CHECK(g.group("a").mean[0] == 2.0);
  CHECK(g.group("a").within_sscp(0, 0) == 2.0);
  CHECK(g.group("b").mean[0] == 5.0);
  CHECK(g.group("b").within_sscp(0, 0) == 0.0);
  CHECK(g.n_total() == 3);

  CHECK_THROWS_AS(group_moments(t, "g", {}), std::invalid_argument);
  CHECK_THROWS_AS(group_moments(t, "g", {"zz"}), std::invalid_argument);
}

TEST_CASE("group_moments is permutation invariant") {
  std::mt19937 rng(42);
  const DataTable t = random_grouped_table(rng, 3, 2);
  const GroupedData g1 = group_moments(t, "g", t.columns);

  DataTable shuffled = t;
  std::vector<int> perm(t.n_rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < t.n_rows(); ++i) {
    shuffled.values.row(i) = t.values.row(perm[i]);
    shuffled.group_labels[i] = t.group_labels[perm[i]];
  }
  const GroupedData g2 = group_moments(shuffled, "g", t.columns);
  REQUIRE(g1.groups.size() == g2.groups.size());
  for (std::size_t k = 0; k < g1.groups.size(); ++k) {
    CHECK(g1.groups[k].label == g2.groups[k].label);
    CHECK(g1.groups[k].mean.isApprox(g2.groups[k].mean, 1e-12));
    CHECK(g1.groups[k].within_sscp.isApprox(g2.groups[k].within_sscp, 1e-9));
  }
}

TEST_CASE("within + between = total on random grouped data") {
  std::mt19937 rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const DataTable t = random_grouped_table(rng, 2 + rep % 4, 1 + rep % 3);
    const GroupedData g = group_moments(t, "g", t.columns);
    const PooledMoments pm = pool(g);
    // oracle: total SSCP from the raw rows directly
    const Eigen::MatrixXd total = raw_sscp(t.values);
    CHECK((pm.total_sscp - total).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, total.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("moments_from_summary reproduces raw-data totals") {
  std::mt19937 rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const DataTable t = random_grouped_table(rng, 3, 2);
    const GroupedData g = group_moments(t, "g", t.columns);
    Eigen::MatrixXd within = Eigen::MatrixXd::Zero(2, 2);
    std::vector<GroupSummary> summaries;
    for (const auto& grp : g.groups) {
      within += grp.within_sscp;
      summaries.push_back({grp.label, grp.n, grp.mean});
    }
    const auto [g2, pm] = moments_from_summary(t.columns, summaries, within);
    const Eigen::MatrixXd total = raw_sscp(t.values);
    CHECK((pm.total_sscp - total).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, total.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("moments_from_summary trivial cases") {
  Eigen::VectorXd m1(1), m2(1);
  m1 << 4.0;
  m2 << 4.0;
  Eigen::MatrixXd w(1, 1);
  w << 6.0;

  const auto [g1, pm1] = moments_from_summary({"y"}, {{"a", 5, m1}}, w);
  CHECK(pm1.total_sscp(0, 0) == 6.0);

  const auto [g2, pm2] =
      moments_from_summary({"y"}, {{"a", 5, m1}, {"b", 3, m2}}, w);
  CHECK(pm2.total_sscp(0, 0) == 6.0);  // equal means, zero between

  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(moments_from_summary({"y"}, {{"a", 5, bad}}, w),
                  std::invalid_argument);
}

TEST_CASE("fixture totals match the published total SSCP") {
  const auto [grouped, pooled] = GenderFixture::moments();
  Eigen::MatrixXd printed(3, 3);
  printed << 11137.714, 11588.857, 8444.571,
             11588.857, 19239.429, 12413.286,
              8444.571, 12413.286, 11072.357;
  CHECK((pooled.total_sscp - printed).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("fixture correlations match the published values") {
  const auto [grouped, pooled] = GenderFixture::moments();
  const Eigen::MatrixXd r = correlation_matrix(pooled);
  CHECK(std::fabs(r(0, 1) - 0.79) < 0.005);  // reading-math
  CHECK(std::fabs(r(0, 2) - 0.76) < 0.005);  // reading-language
  CHECK(std::fabs(r(1, 2) - 0.85) < 0.005);  // math-language
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(r(i, i) - 1.0) < 1e-12);
}

TEST_CASE("correlation trivial cases") {
  PooledMoments pm;
  pm.variables = {"a", "b"};
  pm.n_total = 3;
  pm.covariance = Eigen::MatrixXd::Zero(2, 2);
  pm.covariance(0, 0) = 2.0;
  pm.covariance(1, 1) = 5.0;
  const Eigen::MatrixXd r = correlation_matrix(pm);
  CHECK(r.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-12));

  // perfectly collinear points {(0,0),(1,1),(2,2)}
  DataTable t;
  t.columns = {"x", "y"};
  t.group_column = "g";
  t.values.resize(3, 2);
  t.values << 0, 0, 1, 1, 2, 2;
  t.group_labels = {"a", "a", "a"};
  const PooledMoments pm2 = pool(group_moments(t, "g", t.columns));
  CHECK(std::fabs(correlation_matrix(pm2)(0, 1) - 1.0) < 1e-12);

  pm.covariance(1, 1) = 0.0;
  CHECK_THROWS_WITH_AS(correlation_matrix(pm), doctest::Contains("b"),
                       std::invalid_argument);
}

TEST_CASE("fixture documents the female math SD correction") {
  CHECK(GenderFixture::female_math_sd_published() == 15.80);
  CHECK(std::fabs(GenderFixture::female_math_sd_corrected() - 26.93) < 0.01);
  CHECK(GenderFixture::correction_note().find("15.80") != std::string::npos);
}
