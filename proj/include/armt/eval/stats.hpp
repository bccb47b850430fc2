#pragma once

#include <cstddef>
#include <span>

namespace armt::eval {

/// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

/// Pearson chi-square statistic of observed counts against equal expected counts.
double chi_square_uniform(std::span<const std::size_t> counts);

/// P(X >= stat) for X ~ chi-square with `dof` degrees of freedom.
double chi_square_sf(double stat, double dof);

}  // namespace armt::eval
