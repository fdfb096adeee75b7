#pragma once

namespace mmi::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom.
double f_sf(double f, double d1, double d2);

/// Two-sided P(|T| > |t|) of Student's t with nu degrees of freedom.
double t_two_sided(double t, double nu);

}  // namespace mmi::stats
