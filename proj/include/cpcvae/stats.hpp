#pragma once

#include <span>

namespace cpcvae {

double mean(std::span<const double> v);
/// Sample standard deviation (divides by n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> v);
double median(std::span<const double> v);
/// Spearman rank correlation; tied values receive their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0, intercept = 0, r_squared = 0;
};
/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace cpcvae
