#pragma once

#include "hiermodel/moments.hpp"

namespace hiermodel {

// Embedded 14-student gender/achievement example.  Only summary statistics
// were published (group means and SDs, pooled within and total SSCP
// matrices); group sizes 8/6 are forced by the mean rounding (658.13 =
// 5265/8, 631.67 = 3790/6) and confirmed by the between-groups sums of
// squares.  Means are stored at the exact rational values implied by the
// printed two-decimal roundings.
struct GenderFixture {
  static constexpr int n_male = 8;
  static constexpr int n_female = 6;
  static constexpr int n_total = 14;

  // Variable order used everywhere: reading, math, language.
  static const std::vector<std::string>& variables();

  static Eigen::VectorXd male_mean();
  static Eigen::VectorXd female_mean();
  static Eigen::MatrixXd within_sscp();
  static Eigen::MatrixXd total_sscp();  // within + between, exact

  // The published female math SD (15.80) contradicts the pooled within
  // SSCP, which implies 26.93; the corrected value is canonical and the
  // discrepancy is surfaced through this note.
  static double female_math_sd_published();   // 15.80
  static double female_math_sd_corrected();   // ~26.93
  static std::string correction_note();

  // Grouped + pooled moments over {reading, math, language}, groups sorted
  // as {female, male}.  Reference (dummy 0) group for regression is male.
  static std::pair<GroupedData, PooledMoments> moments();

  // 4-variable sample covariance (female dummy, reading, math, language)
  // with the n-1 divisor, for the latent-factor model fit.
  static std::pair<std::vector<std::string>, Eigen::MatrixXd> sem_sample();

  // A 14-row raw table consistent with the fixture moments (group means and
  // pooled within SSCP reproduce exactly).  The raw rows were never
  // published; this is one admissible reconstruction, used for round-trip
  // tests of the raw-data path.
  static DataTable synthetic_raw_table();
};

} // namespace hiermodel
