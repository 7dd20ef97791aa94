#include "hiermodel/fixture.hpp"

#include <cmath>

namespace hiermodel {

const std::vector<std::string>& GenderFixture::variables() {
  static const std::vector<std::string> v = {"reading", "math", "language"};
  return v;
}

Eigen::VectorXd GenderFixture::male_mean() {
  Eigen::VectorXd m(3);
  m << 5207.0 / 8.0, 679.75, 5265.0 / 8.0;  // 650.875, 679.75, 658.125
  return m;
}

Eigen::VectorXd GenderFixture::female_mean() {
  Eigen::VectorXd m(3);
  m << 641.50, 637.00, 3790.0 / 6.0;  // 641.50, 637.00, 631.667
  return m;
}

Eigen::MatrixXd GenderFixture::within_sscp() {
  Eigen::MatrixXd w(3, 3);
  w << 10836.375, 10214.750, 7594.125,
       10214.750, 12973.500, 8535.250,
        7594.125,  8535.250, 8672.208;
  return w;
}

Eigen::MatrixXd GenderFixture::total_sscp() {
  const Eigen::VectorXd d = female_mean() - male_mean();
  const double w = static_cast<double>(n_male) * n_female / n_total;
  return within_sscp() + w * (d * d.transpose());
}

double GenderFixture::female_math_sd_published() { return 15.80; }

double GenderFixture::female_math_sd_corrected() {
  // pooled within math SS minus the male share (7 * 36.54^2), over n_f - 1
  const double male_ss = 7.0 * 36.54 * 36.54;
  return std::sqrt((12973.500 - male_ss) / (n_female - 1));
}

std::string GenderFixture::correction_note() {
  return "female math SD corrected from published 15.80 to " +
         std::to_string(female_math_sd_corrected()).substr(0, 5) +
         " (implied by the pooled within-group SSCP; 15.80 appears to "
         "duplicate the female reading SD)";
}

std::pair<GroupedData, PooledMoments> GenderFixture::moments() {
  std::vector<GroupSummary> groups = {
      {"female", n_female, female_mean()},
      {"male", n_male, male_mean()},
  };
  return moments_from_summary(variables(), groups, within_sscp());
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> GenderFixture::sem_sample() {
  const std::vector<std::string> names = {"female", "reading", "math", "language"};
  const Eigen::VectorXd d = female_mean() - male_mean();
  const double w = static_cast<double>(n_male) * n_female / n_total;
  Eigen::MatrixXd s(4, 4);
  s(0, 0) = w / (n_total - 1);
  for (int i = 0; i < 3; ++i) {
    s(0, i + 1) = s(i + 1, 0) = w * d[i] / (n_total - 1);
  }
  s.block<3, 3>(1, 1) = total_sscp() / (n_total - 1);
  return {names, s};
}

namespace {

// n x 3 block with zero column sums and deviation SSCP exactly W:
// rows of an orthonormal Helmert basis (each orthogonal to the ones
// vector) scaled by the Cholesky factor of W.
Eigen::MatrixXd block_with_sscp(int n, const Eigen::MatrixXd& w) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, n);
  for (int k = 1; k <= 3; ++k) {
    const double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int j = 0; j < k; ++j) h(k - 1, j) = s;
    h(k - 1, k) = -k * s;
  }
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(w).matrixL();
  return h.transpose() * l.transpose();
}

} // namespace

DataTable GenderFixture::synthetic_raw_table() {
  // Split the pooled within SSCP so each group's diagonal reproduces the
  // published SDs (male 37.01/36.54/27.78; female follows by subtraction,
  // landing on 15.80 / 26.93-corrected / 25.57).  Female off-diagonals are
  // shrunk by 0.9 to keep both blocks positive definite; the remainder goes
  // to the male block, so the pooled sum is exact.
  const Eigen::MatrixXd w = within_sscp();
  Eigen::Vector3d male_sd(37.01, 36.54, 27.78);
  Eigen::Vector3d scale;
  for (int i = 0; i < 3; ++i)
    scale[i] = std::sqrt((n_male - 1) * male_sd[i] * male_sd[i] / w(i, i));
  const Eigen::MatrixXd base_male =
      scale.asDiagonal() * w * scale.asDiagonal();
  Eigen::MatrixXd rest = w - base_male;
  Eigen::MatrixXd w_female = 0.9 * rest;
  w_female.diagonal() = rest.diagonal();
  const Eigen::MatrixXd w_male = w - w_female;

  DataTable table;
  table.columns = variables();
  table.group_column = "gender";
  table.values.resize(n_total, 3);
  const Eigen::MatrixXd xm = block_with_sscp(n_male, w_male);
  const Eigen::MatrixXd xf = block_with_sscp(n_female, w_female);
  for (int i = 0; i < n_male; ++i) {
    table.values.row(i) = xm.row(i) + male_mean().transpose();
    table.group_labels.push_back("male");
  }
  for (int i = 0; i < n_female; ++i) {
    table.values.row(n_male + i) = xf.row(i) + female_mean().transpose();
    table.group_labels.push_back("female");
  }
  return table;
}

} // namespace hiermodel
