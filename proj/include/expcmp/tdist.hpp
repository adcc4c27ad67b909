#pragma once

// Central and noncentral Student-t distribution functions and quantiles.
//
// All functions are pure and thread-safe. Degrees of freedom are accepted as
// real (not integer) so fractional-df corrections remain possible; every use
// in this library has integer df = N - 1.

namespace expcmp::stats {

// Parameters of a (possibly noncentral) t distribution.
struct DistParams {
    double df = 1.0;   // degrees of freedom, > 0
    double ncp = 0.0;  // noncentrality parameter, finite

    // Throws DomainError if df <= 0 or either field is non-finite.
    void validate() const;
};

// Standard normal CDF / quantile (exposed because several modules need them).
double normal_cdf(double x);
double normal_quantile(double p);

// Regularized incomplete beta function I_x(a, b); continued-fraction
// evaluation, accurate to ~1e-14. Exposed for test oracles and the binomial
// tail computations in the analysis module.
double incomplete_beta(double a, double b, double x);

// CDF of the central t distribution. Absolute error <= 1e-12.
double t_cdf(double x, double df);

// Quantile of the central t distribution, 0 < p < 1.
// Bracketed bisection with secant refinement; |t_cdf(result) - p| <= 1e-10.
double t_quantile(double p, double df);

// CDF of the noncentral t distribution with noncentrality ncp.
// Convergent series of incomplete-beta terms with Poisson-like weights,
// summed outward from the dominant index; truncation error is bounded by the
// unaccounted weight mass and kept below 1e-12. Reduces to t_cdf at ncp = 0.
double nct_cdf(double x, double df, double ncp);

// Quantile of the noncentral t distribution, 0 < p < 1.
// Same inversion scheme as t_quantile; |nct_cdf(result) - p| <= 1e-9.
double nct_quantile(double p, double df, double ncp);

}  // namespace expcmp::stats
