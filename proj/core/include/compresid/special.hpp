#pragma once

// Scalar special functions. All are pure and reentrant; invalid arguments
// throw DomainError.

namespace compresid {

/// ln Gamma(x) for x > 0.
double log_gamma(double x);

/// psi(x) = d/dx ln Gamma(x) for x > 0.
double digamma(double x);

/// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);

/// Regularized lower incomplete gamma P(s, x) = gamma(s, x) / Gamma(s).
/// Argument order follows the call sites: evaluation point first.
double reg_inc_gamma(double x, double s);

/// Chi-square distribution function with `df` degrees of freedom.
double chi_square_cdf(double x, double df);

double std_normal_cdf(double z);

/// Inverse of std_normal_cdf on the open interval (0, 1).
double std_normal_quantile(double p);

}  // namespace compresid
