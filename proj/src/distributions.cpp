#include "hiermodel/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hiermodel {

namespace {

constexpr double kTol = 1e-12;
constexpr int kMaxIter = 300;
constexpr double kTiny = 1e-300;

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double x, double a, double b) {
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    // even step
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    // odd step
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kTol) break;
  }
  return h;
}

} // namespace

double inc_beta(double x, double a, double b) {
  if (a <= 0.0 || b <= 0.0)
    throw std::invalid_argument("inc_beta: shape parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return clamp01(front * beta_cf(x, a, b) / a);
  return clamp01(1.0 - front * beta_cf(1.0 - x, b, a) / b);
}

double inc_gamma_p(double a, double x) {
  if (a <= 0.0)
    throw std::invalid_argument("inc_gamma_p: shape parameter must be positive");
  if (x < 0.0)
    throw std::invalid_argument("inc_gamma_p: argument must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    // series representation
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < kMaxIter; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * kTol) break;
    }
    return clamp01(sum * std::exp(-x + a * std::log(x) - std::lgamma(a)));
  }
  // continued fraction for Q(a, x)
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kTol) break;
  }
  const double q = h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  return clamp01(1.0 - q);
}

double inc_gamma_q(double a, double x) { return clamp01(1.0 - inc_gamma_p(a, x)); }

double f_upper_tail(double f, double df1, double df2) {
  if (df1 <= 0.0 || df2 <= 0.0)
    throw std::invalid_argument("f_upper_tail: degrees of freedom must be positive");
  if (f < 0.0)
    throw std::invalid_argument("f_upper_tail: statistic must be nonnegative");
  if (f == 0.0) return 1.0;
  return clamp01(inc_beta(df2 / (df2 + df1 * f), 0.5 * df2, 0.5 * df1));
}

double t_two_sided(double t, double df) {
  if (df <= 0.0)
    throw std::invalid_argument("t_two_sided: degrees of freedom must be positive");
  return f_upper_tail(t * t, 1.0, df);
}

double chi2_upper_tail(double x, double df) {
  if (df <= 0.0)
    throw std::invalid_argument("chi2_upper_tail: degrees of freedom must be positive");
  if (x < 0.0)
    throw std::invalid_argument("chi2_upper_tail: statistic must be nonnegative");
  return inc_gamma_q(0.5 * df, 0.5 * x);
}

} // namespace hiermodel
