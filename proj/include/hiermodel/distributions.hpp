#pragma once

namespace hiermodel {

// Regularized incomplete beta function I_x(a, b).
// Continued-fraction evaluation (modified Lentz), switching to the
// complement when x > (a+1)/(a+b+2).
double inc_beta(double x, double a, double b);

// Regularized lower incomplete gamma P(a, x) and its complement Q(a, x).
// Series expansion for x < a+1, continued fraction otherwise.
double inc_gamma_p(double a, double x);
double inc_gamma_q(double a, double x);

// Upper-tail probability of the F distribution: P(F_{df1,df2} > f).
double f_upper_tail(double f, double df1, double df2);

// Two-sided tail of Student's t: P(|T_df| > |t|).  Equals
// f_upper_tail(t^2, 1, df).
double t_two_sided(double t, double df);

// Upper-tail probability of the chi-square distribution: P(X^2_df > x).
double chi2_upper_tail(double x, double df);

} // namespace hiermodel
