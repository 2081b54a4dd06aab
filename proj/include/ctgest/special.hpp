#pragma once

namespace ctgest {

// Regularized lower / upper incomplete gamma P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with k degrees of freedom.
double chi_square_sf(double x, int k);

double normal_cdf(double z);

// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

}  // namespace ctgest
