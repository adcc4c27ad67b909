#pragma once

#include <span>

namespace expcmp::stats {

double mean(std::span<const double> v);

// Sample variance / sd with the n-1 denominator; requires n >= 2.
double sample_variance(std::span<const double> v);
double sample_sd(std::span<const double> v);

// Moment-based sample skewness m3 / m2^(3/2) and excess kurtosis m4/m2^2 - 3.
// Both return 0 for degenerate (constant) samples. Used for normality
// diagnostics of paired-difference vectors.
double skewness(std::span<const double> v);
double excess_kurtosis(std::span<const double> v);

}  // namespace expcmp::stats
